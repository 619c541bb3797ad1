#include "cycconf/synthvid.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "cycconf/png_io.hpp"
#include "cycconf/rng.hpp"
#include "cycconf/util.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace cycconf::synthvid {

namespace {

struct Rgb {
  double r, g, b;
};

constexpr Rgb kCategoryColors[kNumCategories] = {
    {205.0, 70.0, 60.0},   // circle
    {70.0, 185.0, 80.0},   // square
    {65.0, 90.0, 210.0},   // triangle
};

struct ObjectSpec {
  int category = 0;
  double half_extent = 8.0;
  Rgb color{};
};

struct ObjectState {
  double cx = 0, cy = 0;
  double vx = 0, vy = 0;
};

BBox object_box(const ObjectSpec& spec, const ObjectState& st) {
  return {st.cx - spec.half_extent, st.cy - spec.half_extent,
          st.cx + spec.half_extent, st.cy + spec.half_extent,
          0.0, spec.category};
}

double overlap_fraction(const BBox& a, const BBox& b) {
  const double inter = box_intersection(a, b);
  if (inter <= 0) return 0.0;
  return inter / std::min(a.area(), b.area());
}

void wall_clamp(const ObjectSpec& spec, ObjectState& st, double w, double h,
                bool reflect) {
  const double r = spec.half_extent;
  if (st.cx < r) {
    st.cx = 2 * r - st.cx;
    if (reflect) st.vx = -st.vx;
  }
  if (st.cx > w - r) {
    st.cx = 2 * (w - r) - st.cx;
    if (reflect) st.vx = -st.vx;
  }
  if (st.cy < r) {
    st.cy = 2 * r - st.cy;
    if (reflect) st.vy = -st.vy;
  }
  if (st.cy > h - r) {
    st.cy = 2 * (h - r) - st.cy;
    if (reflect) st.vy = -st.vy;
  }
  st.cx = std::clamp(st.cx, r, w - r);
  st.cy = std::clamp(st.cy, r, h - r);
}

// One trajectory attempt: sample objects, advance with bounce and collision
// resolution. Returns the worst pairwise box-overlap fraction seen.
double simulate(const SequenceParams& params, int canvas_w, int canvas_h,
                int n_frames, int n_objects, CounterRng& rng,
                std::vector<ObjectSpec>* specs,
                std::vector<std::vector<ObjectState>>* trajectory) {
  specs->clear();
  trajectory->clear();

  std::vector<ObjectState> cur(n_objects);
  for (int i = 0; i < n_objects; ++i) {
    ObjectSpec spec;
    spec.category = static_cast<int>(rng.uniform_int(0, kNumCategories - 1));
    spec.half_extent = rng.uniform(params.min_half_extent, params.max_half_extent);
    const Rgb base = kCategoryColors[spec.category];
    spec.color = {base.r + rng.uniform(-25.0, 25.0),
                  base.g + rng.uniform(-25.0, 25.0),
                  base.b + rng.uniform(-25.0, 25.0)};
    specs->push_back(spec);

    ObjectState st;
    const double r = spec.half_extent;
    st.cx = rng.uniform(r + 1.0, canvas_w - r - 1.0);
    st.cy = rng.uniform(r + 1.0, canvas_h - r - 1.0);
    st.vx = rng.uniform(-params.max_speed, params.max_speed);
    st.vy = rng.uniform(-params.max_speed, params.max_speed);
    cur[i] = st;
  }

  double worst_overlap = 0.0;
  for (int f = 0; f < n_frames; ++f) {
    if (f > 0) {
      for (int i = 0; i < n_objects; ++i) {
        cur[i].cx += cur[i].vx + rng.uniform(-params.pos_jitter, params.pos_jitter);
        cur[i].cy += cur[i].vy + rng.uniform(-params.pos_jitter, params.pos_jitter);
        wall_clamp((*specs)[i], cur[i], canvas_w, canvas_h, true);
      }
    }
    // push apart near-colliding pairs and exchange velocities
    for (int sweep = 0; sweep < 3; ++sweep) {
      bool moved = false;
      for (int i = 0; i < n_objects; ++i) {
        for (int j = i + 1; j < n_objects; ++j) {
          const BBox bi = object_box((*specs)[i], cur[i]);
          const BBox bj = object_box((*specs)[j], cur[j]);
          if (overlap_fraction(bi, bj) <= 0.02) continue;
          double dx = cur[j].cx - cur[i].cx;
          double dy = cur[j].cy - cur[i].cy;
          double norm = std::sqrt(dx * dx + dy * dy);
          if (norm < 1e-6) {
            dx = 1.0;
            dy = 0.0;
            norm = 1.0;
          }
          dx /= norm;
          dy /= norm;
          const double need =
              (*specs)[i].half_extent + (*specs)[j].half_extent - norm;
          if (need > 0) {
            const double push = 0.5 * std::min(need, 3.0);
            cur[i].cx -= dx * push;
            cur[i].cy -= dy * push;
            cur[j].cx += dx * push;
            cur[j].cy += dy * push;
            wall_clamp((*specs)[i], cur[i], canvas_w, canvas_h, false);
            wall_clamp((*specs)[j], cur[j], canvas_w, canvas_h, false);
          }
          if (f > 0) std::swap(cur[i].vx, cur[j].vx), std::swap(cur[i].vy, cur[j].vy);
          moved = true;
        }
      }
      if (!moved) break;
    }
    for (int i = 0; i < n_objects; ++i)
      for (int j = i + 1; j < n_objects; ++j)
        worst_overlap = std::max(
            worst_overlap, overlap_fraction(object_box((*specs)[i], cur[i]),
                                            object_box((*specs)[j], cur[j])));
    trajectory->push_back(cur);
  }
  return worst_overlap;
}

void draw_object(std::vector<double>& canvas, int w, int h,
                 const ObjectSpec& spec, const ObjectState& st) {
  const double r = spec.half_extent;
  const int x0 = std::max(0, static_cast<int>(std::floor(st.cx - r)));
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(st.cx + r)));
  const int y0 = std::max(0, static_cast<int>(std::floor(st.cy - r)));
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(st.cy + r)));
  for (int y = y0; y <= y1; ++y) {
    const double py = y + 0.5 - st.cy;
    for (int x = x0; x <= x1; ++x) {
      const double px = x + 0.5 - st.cx;
      bool inside = false;
      switch (spec.category) {
        case 0:
          inside = px * px + py * py <= r * r;
          break;
        case 1:
          inside = std::abs(px) <= r && std::abs(py) <= r;
          break;
        case 2: {
          // flat-top triangle: apex width 0.25 r widening to the full box
          if (std::abs(py) <= r) {
            const double v = (py + r) / (2.0 * r);
            inside = std::abs(px) <= r * (0.25 + 0.75 * v);
          }
          break;
        }
        default:
          break;
      }
      if (!inside) continue;
      double* px_ptr = &canvas[(static_cast<size_t>(y) * w + x) * 3];
      px_ptr[0] = spec.color.r;
      px_ptr[1] = spec.color.g;
      px_ptr[2] = spec.color.b;
    }
  }
}

}  // namespace

const char* category_name(int id) {
  switch (id) {
    case 0: return "circle";
    case 1: return "square";
    case 2: return "triangle";
    default: throw ContractError("unknown category id " + std::to_string(id));
  }
}

void DomainConfig::validate() const {
  if (time_of_day != "day" && time_of_day != "night")
    throw ContractError("domain '" + name + "': time_of_day must be day or night");
  if (fog_alpha < 0.0 || fog_alpha > 1.0)
    throw ContractError("domain '" + name + "': fog_alpha out of [0,1]");
  if (brightness_scale < 0.0 || brightness_scale > 1.0)
    throw ContractError("domain '" + name + "': brightness_scale out of [0,1]");
  if (noise_sigma < 0.0)
    throw ContractError("domain '" + name + "': negative noise_sigma");
  if (camera_shift_px < 0)
    throw ContractError("domain '" + name + "': negative camera_shift_px");
  if (time_of_day == "night" && brightness_scale > 0.5)
    throw ContractError("domain '" + name +
                        "': night requires brightness_scale <= 0.5");
}

GeneratedSequence generate_sequence(const DomainConfig& domain,
                                    const SequenceParams& params, uint64_t seed,
                                    const std::string& sequence_id) {
  domain.validate();
  const int size = params.frame_size;
  const int canvas_w = size + domain.camera_shift_px;
  const int canvas_h = size;

  CounterRng top(seed);
  const int n_frames =
      static_cast<int>(top.uniform_int(params.min_frames, params.max_frames));
  const int n_objects =
      static_cast<int>(top.uniform_int(params.min_objects, params.max_objects));

  // retry trajectories until objects stay essentially disjoint
  std::vector<ObjectSpec> specs, best_specs;
  std::vector<std::vector<ObjectState>> traj, best_traj;
  double best_overlap = 1e9;
  for (int attempt = 0; attempt < 50; ++attempt) {
    CounterRng rng(CounterRng::derive(seed, 100 + attempt));
    const double worst =
        simulate(params, canvas_w, canvas_h, n_frames, n_objects, rng, &specs, &traj);
    if (worst < best_overlap) {
      best_overlap = worst;
      best_specs = specs;
      best_traj = traj;
    }
    if (worst <= 0.10) break;
  }
  specs = std::move(best_specs);
  traj = std::move(best_traj);

  // per-sequence background gradient
  CounterRng bg_rng(CounterRng::derive(seed, 1));
  const Rgb top_color = {168.0 + bg_rng.uniform(-12.0, 12.0),
                         188.0 + bg_rng.uniform(-12.0, 12.0),
                         214.0 + bg_rng.uniform(-12.0, 12.0)};
  const Rgb bot_color = {98.0 + bg_rng.uniform(-12.0, 12.0),
                         104.0 + bg_rng.uniform(-12.0, 12.0),
                         96.0 + bg_rng.uniform(-12.0, 12.0)};

  CounterRng noise_rng(CounterRng::derive(seed, 2));

  GeneratedSequence out;
  out.record.id = sequence_id;
  out.record.seed = seed;
  out.record.domain = domain;

  std::vector<double> canvas(static_cast<size_t>(canvas_w) * canvas_h * 3);
  for (int f = 0; f < n_frames; ++f) {
    for (int y = 0; y < canvas_h; ++y) {
      const double t = canvas_h > 1 ? static_cast<double>(y) / (canvas_h - 1) : 0.0;
      const Rgb row = {top_color.r + (bot_color.r - top_color.r) * t,
                       top_color.g + (bot_color.g - top_color.g) * t,
                       top_color.b + (bot_color.b - top_color.b) * t};
      for (int x = 0; x < canvas_w; ++x) {
        double* p = &canvas[(static_cast<size_t>(y) * canvas_w + x) * 3];
        p[0] = row.r;
        p[1] = row.g;
        p[2] = row.b;
      }
    }
    for (int i = 0; i < static_cast<int>(specs.size()); ++i)
      draw_object(canvas, canvas_w, canvas_h, specs[i], traj[f][i]);

    // crop the shifted window and apply the domain transforms
    ImageU8 frame(size, size, 3);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double* p =
            &canvas[(static_cast<size_t>(y) * canvas_w + x + domain.camera_shift_px) * 3];
        for (int c = 0; c < 3; ++c) {
          double v = p[c] * domain.brightness_scale;
          v = (1.0 - domain.fog_alpha) * v + domain.fog_alpha * 160.0;
          if (domain.noise_sigma > 0.0)
            v += noise_rng.normal() * domain.noise_sigma * 255.0;
          frame.at(y, x, c) =
              static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
        }
      }
    }

    FrameRecord rec;
    rec.index = f;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%03d.png", f);
    rec.file = buf;
    for (int i = 0; i < static_cast<int>(specs.size()); ++i) {
      BBox box = object_box(specs[i], traj[f][i]);
      box.x1 -= domain.camera_shift_px;
      box.x2 -= domain.camera_shift_px;
      const double full = box.area();
      BBox clipped = clip_box(box, size, size);
      clipped.category = box.category;
      if (!clipped.valid() || clipped.area() < 0.25 * full) continue;
      rec.boxes.push_back(clipped);
    }
    out.record.frames.push_back(std::move(rec));
    out.frames.push_back(std::move(frame));
  }
  return out;
}

namespace {

json domain_to_json(const DomainConfig& d) {
  return json{{"name", d.name},
              {"time_of_day", d.time_of_day},
              {"fog_alpha", d.fog_alpha},
              {"camera_shift_px", d.camera_shift_px},
              {"brightness_scale", d.brightness_scale},
              {"noise_sigma", d.noise_sigma}};
}

json sequence_to_json(const SequenceRecord& rec) {
  json frames = json::array();
  for (const auto& f : rec.frames) {
    json boxes = json::array();
    json categories = json::array();
    for (const auto& b : f.boxes) {
      boxes.push_back({b.x1, b.y1, b.x2, b.y2});
      categories.push_back(b.category);
    }
    frames.push_back({{"index", f.index},
                      {"file", f.file},
                      {"boxes", boxes},
                      {"categories", categories}});
  }
  return json{{"schema_version", 1},
              {"sequence_id", rec.id},
              {"seed", rec.seed},
              {"domain", domain_to_json(rec.domain)},
              {"frames", frames}};
}

void write_split_manifest(const fs::path& dir, const BenchmarkSpec& spec,
                          uint64_t master_seed,
                          const std::vector<json>& sequences) {
  json manifest{{"schema_version", 1},
                {"format", "cycconf-benchmark"},
                {"master_seed", master_seed},
                {"frame_size", spec.params.frame_size},
                {"sequences", sequences}};
  atomic_write_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
}

}  // namespace

BenchmarkSpec BenchmarkSpec::default_spec() {
  BenchmarkSpec spec;

  DomainSplitSpec day;
  day.domain.name = "day";
  day.train_sequences = 20;
  day.val_sequences = 5;

  DomainSplitSpec night;
  night.domain.name = "night";
  night.domain.time_of_day = "night";
  night.domain.brightness_scale = 0.3;
  night.domain.noise_sigma = 0.02;
  night.train_sequences = 10;
  night.val_sequences = 5;

  DomainSplitSpec fog;
  fog.domain.name = "fog";
  fog.domain.fog_alpha = 0.5;
  fog.train_sequences = 10;
  fog.val_sequences = 5;

  DomainSplitSpec shift;
  shift.domain.name = "shift";
  shift.domain.camera_shift_px = 16;
  shift.train_sequences = 10;
  shift.val_sequences = 5;

  spec.domains = {day, night, fog, shift};
  return spec;
}

BenchmarkSpec BenchmarkSpec::from_kv(const KvConfig& kv) {
  BenchmarkSpec spec;
  spec.params.frame_size = static_cast<int>(kv.get_int("frame_size", 128));
  spec.params.min_frames = static_cast<int>(kv.get_int("min_frames", 8));
  spec.params.max_frames = static_cast<int>(kv.get_int("max_frames", 40));
  spec.params.min_objects = static_cast<int>(kv.get_int("min_objects", 1));
  spec.params.max_objects = static_cast<int>(kv.get_int("max_objects", 6));
  spec.params.max_speed = kv.get_double("max_speed", 2.2);

  auto domains = kv.get("domains");
  if (!domains) return spec;  // empty spec: no domains listed

  std::string name;
  std::istringstream in(*domains);
  while (std::getline(in, name, ',')) {
    name.erase(std::remove_if(name.begin(), name.end(),
                              [](char c) { return c == ' ' || c == '\t'; }),
               name.end());
    if (name.empty()) continue;
    DomainSplitSpec d;
    d.domain.name = name;
    d.domain.time_of_day = kv.get_string(name + ".time_of_day", "day");
    d.domain.fog_alpha = kv.get_double(name + ".fog_alpha", 0.0);
    d.domain.camera_shift_px =
        static_cast<int>(kv.get_int(name + ".camera_shift_px", 0));
    d.domain.brightness_scale = kv.get_double(name + ".brightness_scale", 1.0);
    d.domain.noise_sigma = kv.get_double(name + ".noise_sigma", 0.0);
    d.train_sequences = static_cast<int>(kv.get_int(name + ".train", 0));
    d.val_sequences = static_cast<int>(kv.get_int(name + ".val", 0));
    d.domain.validate();
    spec.domains.push_back(d);
  }
  return spec;
}

void generate_benchmark(const BenchmarkSpec& spec, const std::string& out_dir,
                        uint64_t master_seed, bool force) {
  for (const auto& d : spec.domains) d.domain.validate();

  const fs::path root(out_dir);
  if (fs::exists(root) && !fs::is_empty(root)) {
    if (!force)
      throw IoError("output directory not empty: " + out_dir +
                    " (use force to overwrite)");
    fs::remove_all(root);
  }
  fs::create_directories(root);

  int global_index = 0;
  std::vector<json> all_sequences;
  for (const auto& d : spec.domains) {
    for (const std::string split : {"train", "val"}) {
      const int count = split == "train" ? d.train_sequences : d.val_sequences;
      const fs::path split_dir = root / d.domain.name / split;
      fs::create_directories(split_dir);
      std::vector<json> split_sequences;
      for (int s = 0; s < count; ++s) {
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "seq_%04d", global_index);
        const uint64_t seed = CounterRng::derive(master_seed, global_index);
        ++global_index;

        GeneratedSequence gen =
            generate_sequence(d.domain, spec.params, seed, idbuf);
        const fs::path seq_dir = split_dir / idbuf;
        fs::create_directories(seq_dir);
        for (size_t f = 0; f < gen.frames.size(); ++f)
          write_png((seq_dir / gen.record.frames[f].file).string(), gen.frames[f]);
        atomic_write_file((seq_dir / "seq.json").string(),
                          sequence_to_json(gen.record).dump(2) + "\n");

        json entry{{"id", gen.record.id},
                   {"domain", d.domain.name},
                   {"split", split},
                   {"path", std::string(idbuf)},
                   {"frames", gen.record.frames.size()}};
        split_sequences.push_back(entry);
        json root_entry = entry;
        root_entry["path"] = d.domain.name + "/" + split + "/" + idbuf;
        all_sequences.push_back(root_entry);
      }
      write_split_manifest(split_dir, spec, master_seed, split_sequences);
    }
  }

  json manifest{{"schema_version", 1},
                {"format", "cycconf-benchmark"},
                {"master_seed", master_seed},
                {"frame_size", spec.params.frame_size},
                {"domains", json::array()},
                {"sequences", all_sequences}};
  for (const auto& d : spec.domains) {
    json dj = domain_to_json(d.domain);
    dj["train_sequences"] = d.train_sequences;
    dj["val_sequences"] = d.val_sequences;
    manifest["domains"].push_back(dj);
  }
  atomic_write_file((root / "manifest.json").string(), manifest.dump(2) + "\n");
}

}  // namespace cycconf::synthvid
