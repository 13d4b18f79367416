//------------------------------------------------------------------------------
//
//   Copyright 2026 The latent-replay authors
//
//   Licensed under the Apache License, Version 2.0 (the "License");
//   you may not use this file except in compliance with the License.
//   You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
//   Unless required by applicable law or agreed to in writing, software
//   distributed under the License is distributed on an "AS IS" BASIS,
//   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
//   See the License for the specific language governing permissions and
//   limitations under the License.
//
//------------------------------------------------------------------------------

#include "latent_replay/scenario.hpp"

#include "latent_replay/error.hpp"
#include "latent_replay/rng.hpp"
#include "latent_replay/tensor_io.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace lr {

namespace {

using nlohmann::json;

struct Wave
{
  double fx{0.0};
  double fy{0.0};
  double amplitude{0.0};
  double phase{0.0};
};

using Object = std::vector<Wave>;

std::vector<Wave> RandomWaves(SeededRng &rng, std::size_t count, std::size_t max_freq, double strength)
{
  std::vector<Wave> waves;
  auto const        span = static_cast<std::uint64_t>(2 * max_freq + 1);
  while (waves.size() < count)
  {
    Wave w;
    w.fx = static_cast<double>(rng.Below(span)) - static_cast<double>(max_freq);
    w.fy = static_cast<double>(rng.Below(max_freq + 1));
    if (w.fx == 0.0 && w.fy == 0.0)
    {
      continue;
    }
    w.amplitude = strength * rng.Uniform(0.5, 1.0);
    w.phase     = rng.Uniform(0.0, 2.0 * std::numbers::pi);
    waves.push_back(w);
  }
  return waves;
}

/// Rescales so that a frame has unit variance before noise and gain.
void Normalize(Object &object)
{
  double power = 0.0;
  for (Wave const &w : object)
  {
    power += 0.5 * w.amplitude * w.amplitude;
  }
  double const scale = power > 0.0 ? 1.0 / std::sqrt(power) : 1.0;
  for (Wave &w : object)
  {
    w.amplitude *= scale;
  }
}

void Render(Object const &object, TinyNicParams const &p, double dx, double dy, double gain, SeededRng &rng,
            std::span<float> out)
{
  double const two_pi = 2.0 * std::numbers::pi;
  for (std::size_t v = 0; v < p.height; ++v)
  {
    for (std::size_t u = 0; u < p.width; ++u)
    {
      double value = 0.0;
      for (Wave const &w : object)
      {
        double const arg = w.fx * (static_cast<double>(u) - dx) / static_cast<double>(p.width) +
                           w.fy * (static_cast<double>(v) - dy) / static_cast<double>(p.height);
        value += w.amplitude * std::cos(two_pi * arg + w.phase);
      }
      out[v * p.width + u] = static_cast<float>(gain * value + p.noise * rng.Normal());
    }
  }
}

double Walk(double current, double step, double range, SeededRng &rng)
{
  return std::clamp(current + rng.Uniform(-step, step), -range, range);
}

Tensor Session(Object const &object, TinyNicParams const &p, std::size_t frames, SeededRng &rng)
{
  Tensor out({frames, 1, p.height, p.width});
  double dx   = rng.Uniform(-p.shift_range, p.shift_range);
  double dy   = rng.Uniform(-p.shift_range, p.shift_range);
  double gain = 1.0 + rng.Uniform(-p.gain_range, p.gain_range);
  for (std::size_t t = 0; t < frames; ++t)
  {
    Render(object, p, dx, dy, gain, rng, out.row(t));
    dx   = Walk(dx, p.shift_step, p.shift_range, rng);
    dy   = Walk(dy, p.shift_step, p.shift_range, rng);
    gain = 1.0 + Walk(gain - 1.0, p.gain_step, p.gain_range, rng);
  }
  return out;
}

LabeledSet Labeled(Tensor x, int label)
{
  LabeledSet set;
  set.y.assign(x.dim(0), label);
  set.x = std::move(x);
  return set;
}

template <typename T>
T Field(json const &j, char const *key, T fallback)
{
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

json ReadJson(std::filesystem::path const &path)
{
  std::ifstream is(path);
  Require(is.good(), ErrorCode::kIo, "cannot open " + path.string());
  try
  {
    return json::parse(is);
  }
  catch (json::exception const &e)
  {
    Fail(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
}

void WriteText(std::filesystem::path const &path, std::string const &text)
{
  std::ofstream os(path, std::ios::binary);
  Require(os.good(), ErrorCode::kIo, "cannot write " + path.string());
  os << text;
  Require(os.good(), ErrorCode::kIo, "write failed for " + path.string());
}

json PartJson(std::string const &file, std::vector<int> const &labels)
{
  return json{{"file", file}, {"labels", labels}};
}

LabeledSet LoadPart(json const &part, std::filesystem::path const &base, Shape const &pattern_shape)
{
  try
  {
    LabeledSet set;
    set.x = LoadTensor(base / part.at("file").get<std::string>());
    set.y = part.at("labels").get<std::vector<int>>();
    Require(set.x.rank() >= 1 && RowShape(set.x.shape()) == pattern_shape, ErrorCode::kFormat,
            part.at("file").get<std::string>() + " holds " + ShapeString(set.x.shape()) +
                ", manifest declares rows of " + ShapeString(pattern_shape));
    Require(set.x.dim(0) == set.y.size(), ErrorCode::kFormat,
            part.at("file").get<std::string>() + " has " + std::to_string(set.x.dim(0)) + " rows but " +
                std::to_string(set.y.size()) + " labels");
    return set;
  }
  catch (json::exception const &e)
  {
    Fail(ErrorCode::kFormat, std::string("malformed dataset part: ") + e.what());
  }
}

std::string FormatDouble(double v, char const *fmt)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace

void ValidateTinyNic(TinyNicParams const &p)
{
  Require(p.classes >= 2, ErrorCode::kConfig, "TinyNIC needs at least 2 classes");
  Require(p.instances_per_class >= 1, ErrorCode::kConfig, "TinyNIC needs at least 1 instance per class");
  Require(p.frames_per_session >= 1, ErrorCode::kConfig, "sessions need at least 1 frame");
  Require(p.first_batch_classes >= 1 && p.first_batch_classes <= p.classes, ErrorCode::kConfig,
          "first_batch_classes must lie in [1, classes]");
  Require(p.first_batch_instances >= 1 && p.first_batch_instances <= p.instances_per_class, ErrorCode::kConfig,
          "first_batch_instances must lie in [1, instances_per_class]");
  Require(p.height >= 1 && p.width >= 1, ErrorCode::kConfig, "pattern extent must be positive");
  Require(p.max_frequency >= 1, ErrorCode::kConfig, "max_frequency must be at least 1");
  Require(p.class_components >= 1, ErrorCode::kConfig, "class_components must be at least 1");
  Require(p.shift_range >= 0.0 && p.shift_step >= 0.0 && p.gain_range >= 0.0 && p.gain_step >= 0.0 &&
              p.noise >= 0.0 && p.instance_strength >= 0.0,
          ErrorCode::kConfig, "walk, gain and noise settings must be non-negative");
  Require(p.gain_range < 1.0, ErrorCode::kConfig, "gain_range must stay below 1");

  std::size_t const later = p.classes * p.instances_per_class - p.first_batch_classes * p.first_batch_instances;
  if (p.num_batches > 0)
  {
    Require(p.num_batches <= later + 1, ErrorCode::kConfig,
            "num_batches " + std::to_string(p.num_batches) + " exceeds the " + std::to_string(later + 1) +
                " available sessions");
    Require(p.num_batches - 1 >= p.classes - p.first_batch_classes, ErrorCode::kConfig,
            "num_batches too small to introduce every class");
  }
}

std::string TinyNicParamsToJson(TinyNicParams const &p)
{
  json j = {
      {"classes", p.classes},
      {"instances_per_class", p.instances_per_class},
      {"frames_per_session", p.frames_per_session},
      {"first_batch_classes", p.first_batch_classes},
      {"first_batch_instances", p.first_batch_instances},
      {"test_frames", p.test_frames},
      {"num_batches", p.num_batches},
      {"height", p.height},
      {"width", p.width},
      {"class_components", p.class_components},
      {"instance_components", p.instance_components},
      {"max_frequency", p.max_frequency},
      {"instance_strength", p.instance_strength},
      {"shift_range", p.shift_range},
      {"shift_step", p.shift_step},
      {"gain_range", p.gain_range},
      {"gain_step", p.gain_step},
      {"noise", p.noise},
  };
  return j.dump(2);
}

TinyNicParams ParseTinyNicParams(std::string const &json_text)
{
  json j;
  try
  {
    j = json::parse(json_text);
  }
  catch (json::exception const &e)
  {
    Fail(ErrorCode::kConfig, std::string("scenario parameters: ") + e.what());
  }
  Require(j.is_object(), ErrorCode::kConfig, "scenario parameters must be a JSON object");
  static std::set<std::string> const kKeys = {
      "classes",          "instances_per_class", "frames_per_session", "first_batch_classes",
      "first_batch_instances", "test_frames",    "num_batches",        "height",
      "width",            "class_components",    "instance_components", "max_frequency",
      "instance_strength", "shift_range",        "shift_step",         "gain_range",
      "gain_step",        "noise"};
  for (auto const &[key, value] : j.items())
  {
    Require(kKeys.count(key) > 0, ErrorCode::kConfig, "unknown scenario parameter '" + key + "'");
  }
  TinyNicParams p;
  try
  {
    p.classes               = Field(j, "classes", p.classes);
    p.instances_per_class   = Field(j, "instances_per_class", p.instances_per_class);
    p.frames_per_session    = Field(j, "frames_per_session", p.frames_per_session);
    p.first_batch_classes   = Field(j, "first_batch_classes", p.first_batch_classes);
    p.first_batch_instances = Field(j, "first_batch_instances", p.first_batch_instances);
    p.test_frames           = Field(j, "test_frames", p.test_frames);
    p.num_batches           = Field(j, "num_batches", p.num_batches);
    p.height                = Field(j, "height", p.height);
    p.width                 = Field(j, "width", p.width);
    p.class_components      = Field(j, "class_components", p.class_components);
    p.instance_components   = Field(j, "instance_components", p.instance_components);
    p.max_frequency         = Field(j, "max_frequency", p.max_frequency);
    p.instance_strength     = Field(j, "instance_strength", p.instance_strength);
    p.shift_range           = Field(j, "shift_range", p.shift_range);
    p.shift_step            = Field(j, "shift_step", p.shift_step);
    p.gain_range            = Field(j, "gain_range", p.gain_range);
    p.gain_step             = Field(j, "gain_step", p.gain_step);
    p.noise                 = Field(j, "noise", p.noise);
  }
  catch (json::exception const &e)
  {
    Fail(ErrorCode::kConfig, std::string("scenario parameters: ") + e.what());
  }
  ValidateTinyNic(p);
  return p;
}

bool NicScenario::operator==(NicScenario const &other) const
{
  if (seed != other.seed || classes != other.classes || pattern_shape != other.pattern_shape ||
      batches.size() != other.batches.size() || test.x != other.test.x || test.y != other.test.y)
  {
    return false;
  }
  for (std::size_t i = 0; i < batches.size(); ++i)
  {
    if (batches[i].x != other.batches[i].x || batches[i].y != other.batches[i].y)
    {
      return false;
    }
  }
  return true;
}

NicScenario GenerateTinyNic(TinyNicParams const &p, std::uint64_t seed)
{
  ValidateTinyNic(p);
  SeededRng rng(seed);
  SeededRng shape_rng   = rng.Fork();
  SeededRng order_rng   = rng.Fork();
  SeededRng session_rng = rng.Fork();
  SeededRng test_rng    = rng.Fork();

  // objects[c][i]: class waves followed by the instance's own waves.
  std::vector<std::vector<Object>> objects(p.classes);
  for (std::size_t c = 0; c < p.classes; ++c)
  {
    std::vector<Wave> const prototype = RandomWaves(shape_rng, p.class_components, p.max_frequency, 1.0);
    for (std::size_t i = 0; i < p.instances_per_class; ++i)
    {
      Object object = prototype;
      for (Wave const &w :
           RandomWaves(shape_rng, p.instance_components, p.max_frequency, p.instance_strength))
      {
        object.push_back(w);
      }
      Normalize(object);
      objects[c].push_back(std::move(object));
    }
  }

  std::vector<std::size_t> class_order = order_rng.Permutation(p.classes);
  std::vector<std::size_t> first_classes(class_order.begin(),
                                         class_order.begin() + static_cast<std::ptrdiff_t>(p.first_batch_classes));
  std::sort(first_classes.begin(), first_classes.end());

  // Sessions left for the incremental batches, in a random interleaved order.
  std::vector<std::pair<std::size_t, std::size_t>> later;
  for (std::size_t c = 0; c < p.classes; ++c)
  {
    bool const in_first = std::binary_search(first_classes.begin(), first_classes.end(), c);
    for (std::size_t i = in_first ? p.first_batch_instances : 0; i < p.instances_per_class; ++i)
    {
      later.emplace_back(c, i);
    }
  }
  order_rng.Shuffle(std::span(later));

  if (p.num_batches > 0 && p.num_batches - 1 < later.size())
  {
    // Keep the first session of every class that has not appeared yet, then
    // fill the remaining slots in stream order.
    std::size_t const keep = p.num_batches - 1;
    std::vector<bool> chosen(later.size(), false);
    std::set<std::size_t> introduced(first_classes.begin(), first_classes.end());
    std::size_t           taken = 0;
    for (std::size_t k = 0; k < later.size(); ++k)
    {
      if (introduced.insert(later[k].first).second)
      {
        chosen[k] = true;
        ++taken;
      }
    }
    for (std::size_t k = 0; k < later.size() && taken < keep; ++k)
    {
      if (!chosen[k])
      {
        chosen[k] = true;
        ++taken;
      }
    }
    std::vector<std::pair<std::size_t, std::size_t>> kept;
    for (std::size_t k = 0; k < later.size(); ++k)
    {
      if (chosen[k])
      {
        kept.push_back(later[k]);
      }
    }
    later = std::move(kept);
  }

  NicScenario out;
  out.params        = p;
  out.seed          = seed;
  out.classes       = p.classes;
  out.pattern_shape = {1, p.height, p.width};

  std::vector<LabeledSet> first_parts;
  for (std::size_t c : first_classes)
  {
    for (std::size_t i = 0; i < p.first_batch_instances; ++i)
    {
      first_parts.push_back(
          Labeled(Session(objects[c][i], p, p.frames_per_session, session_rng), static_cast<int>(c)));
    }
  }
  out.batches.push_back(Union(first_parts));
  for (auto [c, i] : later)
  {
    out.batches.push_back(
        Labeled(Session(objects[c][i], p, p.frames_per_session, session_rng), static_cast<int>(c)));
  }

  std::vector<LabeledSet> test_parts;
  if (p.test_frames > 0)
  {
    for (std::size_t c = 0; c < p.classes; ++c)
    {
      for (std::size_t i = 0; i < p.instances_per_class; ++i)
      {
        test_parts.push_back(Labeled(Session(objects[c][i], p, p.test_frames, test_rng), static_cast<int>(c)));
      }
    }
    out.test = Union(test_parts);
  }
  else
  {
    out.test.x = Tensor(WithBatch(0, out.pattern_shape));
  }
  return out;
}

LabeledSet Union(std::span<LabeledSet const> sets)
{
  LabeledSet out;
  for (LabeledSet const &s : sets)
  {
    out.x = ConcatRows(out.x, s.x);
    out.y.insert(out.y.end(), s.y.begin(), s.y.end());
  }
  return out;
}

void SaveDataset(LabeledSet const &set, std::filesystem::path const &manifest_path)
{
  Require(set.x.rank() >= 1 && set.x.dim(0) == set.size(), ErrorCode::kShape, "patterns and labels disagree");
  std::filesystem::path const base = manifest_path.parent_path();
  if (!base.empty())
  {
    std::filesystem::create_directories(base);
  }
  std::string const file = manifest_path.stem().string() + ".lrt";
  SaveTensor(base / file, set.x);
  json manifest = {
      {"format", "lr-dataset-1"},
      {"pattern_shape", RowShape(set.x.shape())},
      {"parts", json::array({PartJson(file, set.y)})},
  };
  WriteText(manifest_path, manifest.dump(2) + "\n");
}

LabeledSet LoadDataset(std::filesystem::path const &manifest_path)
{
  json const manifest = ReadJson(manifest_path);
  try
  {
    Require(manifest.value("format", "") == "lr-dataset-1", ErrorCode::kFormat,
            manifest_path.string() + " is not a dataset manifest");
    Shape const             shape = manifest.at("pattern_shape").get<Shape>();
    std::vector<LabeledSet> parts;
    for (json const &part : manifest.at("parts"))
    {
      parts.push_back(LoadPart(part, manifest_path.parent_path(), shape));
    }
    LabeledSet out = Union(parts);
    if (out.x.rank() == 0)
    {
      out.x = Tensor(WithBatch(0, shape));
    }
    return out;
  }
  catch (json::exception const &e)
  {
    Fail(ErrorCode::kFormat, manifest_path.string() + ": " + e.what());
  }
}

void SaveScenario(NicScenario const &scenario, std::filesystem::path const &dir)
{
  std::filesystem::create_directories(dir);
  json batches = json::array();
  for (std::size_t b = 0; b < scenario.batches.size(); ++b)
  {
    char name[32];
    std::snprintf(name, sizeof name, "batch_%03zu.lrt", b + 1);
    SaveTensor(dir / name, scenario.batches[b].x);
    batches.push_back(PartJson(name, scenario.batches[b].y));
  }
  SaveTensor(dir / "test.lrt", scenario.test.x);
  json manifest = {
      {"format", "tinynic-1"},
      {"seed", std::to_string(scenario.seed)},
      {"classes", scenario.classes},
      {"pattern_shape", scenario.pattern_shape},
      {"params", json::parse(TinyNicParamsToJson(scenario.params))},
      {"batches", batches},
      {"test", PartJson("test.lrt", scenario.test.y)},
  };
  WriteText(dir / "manifest.json", manifest.dump(2) + "\n");
}

NicScenario LoadScenario(std::filesystem::path const &manifest_path)
{
  json const manifest = ReadJson(manifest_path);
  try
  {
    Require(manifest.value("format", "") == "tinynic-1", ErrorCode::kFormat,
            manifest_path.string() + " is not a scenario manifest");
    NicScenario out;
    out.params        = ParseTinyNicParams(manifest.at("params").dump());
    out.seed          = std::stoull(manifest.at("seed").get<std::string>());
    out.classes       = manifest.at("classes").get<std::size_t>();
    out.pattern_shape = manifest.at("pattern_shape").get<Shape>();
    auto const base   = manifest_path.parent_path();
    for (json const &part : manifest.at("batches"))
    {
      out.batches.push_back(LoadPart(part, base, out.pattern_shape));
    }
    out.test = LoadPart(manifest.at("test"), base, out.pattern_shape);
    auto check_labels = [&](LabeledSet const &set) {
      for (int y : set.y)
      {
        Require(y >= 0 && static_cast<std::size_t>(y) < out.classes, ErrorCode::kFormat,
                "label " + std::to_string(y) + " out of range");
      }
    };
    for (LabeledSet const &batch : out.batches)
    {
      check_labels(batch);
    }
    check_labels(out.test);
    return out;
  }
  catch (json::exception const &e)
  {
    Fail(ErrorCode::kFormat, manifest_path.string() + ": " + e.what());
  }
  catch (std::logic_error const &e)
  {
    Fail(ErrorCode::kFormat, manifest_path.string() + ": bad seed (" + e.what() + ")");
  }
}

std::vector<MetricsRow> RunProtocol(Learner &learner, NicScenario const &scenario, ProtocolOptions const &options)
{
  Require(learner.network().classes() >= scenario.classes, ErrorCode::kConfig,
          "network has " + std::to_string(learner.network().classes()) + " outputs for " +
              std::to_string(scenario.classes) + " classes");
  Require(options.eval_every >= 1, ErrorCode::kConfig, "eval_every must be at least 1");
  std::vector<MetricsRow> rows;
  for (std::size_t b = 0; b < scenario.batches.size(); ++b)
  {
    LabeledSet const &batch  = scenario.batches[b];
    BatchReport const report = learner.TrainBatch(batch.x, batch.y);

    MetricsRow row;
    row.batch    = report.batch_index;
    row.train_ms = options.record_wall_time ? report.train_ms : 0.0;
    row.rm_items = report.rm_items;
    row.drift    = report.drift;
    bool const last = b + 1 == scenario.batches.size();
    if (last || (b + 1) % options.eval_every == 0)
    {
      row.accuracy = learner.Accuracy(scenario.test.x, scenario.test.y);
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<MetricsRow> RunProtocol(Network net, StrategyConfig const &cfg, NicScenario const &scenario,
                                    std::uint64_t seed, ProtocolOptions const &options)
{
  Learner learner(cfg, std::move(net), seed);
  return RunProtocol(learner, scenario, options);
}

MetricsRow CumulativeBaseline(Network net, NicScenario const &scenario, CumulativeConfig const &cfg,
                              std::uint64_t seed)
{
  Require(!scenario.batches.empty(), ErrorCode::kConfig, "scenario has no training batches");
  StrategyConfig strategy;
  strategy.name         = "cumulative";
  strategy.kind         = StrategyKind::kNaive;
  strategy.epochs_first = cfg.epochs;
  strategy.mb           = cfg.mb;
  strategy.lr_first     = cfg.lr;

  LabeledSet const          joint = Union(scenario.batches);
  SeededRng                 rng(seed);
  std::vector<std::size_t>  order = rng.Permutation(joint.size());
  std::vector<int>          labels;
  for (std::size_t i : order)
  {
    labels.push_back(joint.y[i]);
  }
  Learner           learner(strategy, std::move(net), rng.NextU64());
  BatchReport const report = learner.TrainBatch(joint.x.gather_rows(order), labels);

  MetricsRow row;
  row.batch    = static_cast<int>(scenario.batches.size());
  row.accuracy = learner.Accuracy(scenario.test.x, scenario.test.y);
  row.train_ms = report.train_ms;
  return row;
}

std::string FormatMetricsCsv(std::span<MetricsRow const> rows)
{
  std::ostringstream os;
  os << "batch,accuracy,train_ms,rm_items,drift\n";
  for (MetricsRow const &r : rows)
  {
    os << r.batch << ',' << (r.accuracy ? FormatDouble(*r.accuracy, "%.6f") : "") << ','
       << FormatDouble(r.train_ms, "%.3f") << ',' << r.rm_items << ','
       << (r.drift ? FormatDouble(*r.drift, "%.6f") : "") << '\n';
  }
  return os.str();
}

double PearsonCorrelation(std::span<float const> a, std::span<float const> b)
{
  Require(a.size() == b.size() && !a.empty(), ErrorCode::kShape, "correlation needs equal, non-empty inputs");
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
  {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(a.size());
  mb /= static_cast<double>(b.size());
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
  {
    double const da = a[i] - ma;
    double const db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  Require(saa > 0.0 && sbb > 0.0, ErrorCode::kNumeric, "correlation of a constant signal");
  return sab / std::sqrt(saa * sbb);
}

double ConsecutiveFrameCorrelation(Tensor const &session)
{
  Require(session.rank() >= 1 && session.dim(0) >= 2, ErrorCode::kShape, "need at least two frames");
  double sum = 0.0;
  for (std::size_t t = 1; t < session.dim(0); ++t)
  {
    sum += PearsonCorrelation(session.row(t - 1), session.row(t));
  }
  return sum / static_cast<double>(session.dim(0) - 1);
}

}  // namespace lr
