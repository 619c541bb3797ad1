#include "cycconf/datapipe.hpp"

#include <filesystem>

#include <json.hpp>

#include "cycconf/png_io.hpp"
#include "cycconf/util.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace cycconf::datapipe {

namespace {

synthvid::DomainConfig domain_from_json(const json& j, const std::string& origin) {
  synthvid::DomainConfig d;
  try {
    d.name = j.at("name").get<std::string>();
    d.time_of_day = j.at("time_of_day").get<std::string>();
    d.fog_alpha = j.at("fog_alpha").get<double>();
    d.camera_shift_px = j.at("camera_shift_px").get<int>();
    d.brightness_scale = j.at("brightness_scale").get<double>();
    d.noise_sigma = j.at("noise_sigma").get<double>();
  } catch (const json::exception& e) {
    throw DataError("malformed domain config in " + origin + ": " + e.what());
  }
  return d;
}

synthvid::SequenceRecord load_sequence(const fs::path& seq_dir, int frame_size) {
  const fs::path json_path = seq_dir / "seq.json";
  if (!fs::exists(json_path))
    throw DataError("missing sequence file: " + json_path.string());

  json j;
  try {
    j = json::parse(read_file(json_path.string()));
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + json_path.string() + ": " + e.what());
  }

  synthvid::SequenceRecord rec;
  rec.dir = seq_dir.string();
  try {
    rec.id = j.at("sequence_id").get<std::string>();
    rec.seed = j.at("seed").get<uint64_t>();
    rec.domain = domain_from_json(j.at("domain"), json_path.string());
    for (const auto& fj : j.at("frames")) {
      synthvid::FrameRecord f;
      f.index = fj.at("index").get<int>();
      f.file = fj.at("file").get<std::string>();
      if (fj.contains("boxes")) {
        const auto& boxes = fj.at("boxes");
        const auto& cats = fj.at("categories");
        if (boxes.size() != cats.size())
          throw DataError("boxes/categories length mismatch in " +
                          json_path.string());
        for (size_t b = 0; b < boxes.size(); ++b) {
          const auto& bj = boxes[b];
          if (bj.size() != 4)
            throw DataError("box needs 4 coordinates in " + json_path.string());
          BBox box{bj[0].get<double>(), bj[1].get<double>(), bj[2].get<double>(),
                   bj[3].get<double>()};
          box.category = cats[b].get<int>();
          if (!box.valid())
            throw DataError("invalid box (x2 <= x1 or y2 <= y1) in " +
                            json_path.string() + ", frame " +
                            std::to_string(f.index));
          if (box.x1 < 0 || box.y1 < 0 || box.x2 > frame_size || box.y2 > frame_size)
            throw DataError("box outside frame bounds in " + json_path.string() +
                            ", frame " + std::to_string(f.index));
          if (box.category < 0 || box.category >= synthvid::kNumCategories)
            throw DataError("unknown category id in " + json_path.string());
          f.boxes.push_back(box);
        }
      }
      rec.frames.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw DataError("malformed sequence record in " + json_path.string() + ": " +
                    e.what());
  }
  if (rec.frames.size() < 2)
    throw DataError("sequence needs at least 2 frames: " + json_path.string());
  for (const auto& f : rec.frames) {
    const fs::path frame_path = seq_dir / f.file;
    if (!fs::exists(frame_path))
      throw DataError("missing frame file: " + frame_path.string());
  }
  return rec;
}

}  // namespace

size_t DatasetIndex::total_frames() const {
  size_t n = 0;
  for (const auto& s : sequences) n += s.frames.size();
  return n;
}

DatasetIndex load_dataset(const std::string& dir) {
  const fs::path root(dir);
  const fs::path manifest_path = root / "manifest.json";
  if (!fs::exists(manifest_path))
    throw DataError("missing manifest: " + manifest_path.string());

  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path.string()));
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + manifest_path.string() + ": " +
                    e.what());
  }

  DatasetIndex index;
  index.root_dir = root.string();
  index.manifest_hash = fnv1a64_file(manifest_path.string());
  try {
    index.frame_size = manifest.at("frame_size").get<int>();
    for (const auto& entry : manifest.at("sequences")) {
      const std::string rel = entry.at("path").get<std::string>();
      auto rec = load_sequence(root / rel, index.frame_size);
      const int pos = static_cast<int>(index.sequences.size());
      const std::string split = entry.value("split", "");
      index.attributes["domain"][rec.domain.name].push_back(pos);
      index.attributes["time_of_day"][rec.domain.time_of_day].push_back(pos);
      if (!split.empty()) index.attributes["split"][split].push_back(pos);
      index.sequences.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + manifest_path.string() + ": " +
                    e.what());
  }
  return index;
}

DatasetIndex split_by_attribute(const DatasetIndex& index,
                                const std::string& attribute,
                                const std::string& value) {
  const auto it = index.attributes.find(attribute);
  if (it == index.attributes.end())
    throw ContractError("unknown attribute: " + attribute);

  DatasetIndex out;
  out.root_dir = index.root_dir;
  out.manifest_hash = index.manifest_hash;
  out.frame_size = index.frame_size;

  const auto vit = it->second.find(value);
  if (vit != it->second.end()) {
    for (int pos : vit->second) out.sequences.push_back(index.sequences[pos]);
  }
  for (int pos = 0; pos < static_cast<int>(out.sequences.size()); ++pos) {
    const auto& rec = out.sequences[pos];
    out.attributes["domain"][rec.domain.name].push_back(pos);
    out.attributes["time_of_day"][rec.domain.time_of_day].push_back(pos);
  }
  // splits are not tracked past a filter; domain and time_of_day remain
  return out;
}

ImageU8 load_frame(const synthvid::SequenceRecord& seq, int frame_index) {
  if (frame_index < 0 || frame_index >= static_cast<int>(seq.frames.size()))
    throw ContractError("frame index out of range");
  return read_png((fs::path(seq.dir) / seq.frames[frame_index].file).string());
}

FramePair sample_frame_pair(const DatasetIndex& index, CounterRng& rng, int gap) {
  if (gap < 1) throw ContractError("pair gap must be >= 1");
  std::vector<int> eligible;
  for (int i = 0; i < static_cast<int>(index.sequences.size()); ++i)
    if (static_cast<int>(index.sequences[i].frames.size()) > gap)
      eligible.push_back(i);
  if (eligible.empty())
    throw DataError("no sequence admits a frame pair with gap " +
                    std::to_string(gap));

  const auto seq_pos =
      eligible[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(eligible.size()) - 1))];
  const auto& seq = index.sequences[seq_pos];
  const int max_t0 = static_cast<int>(seq.frames.size()) - gap - 1;
  const int t0 = static_cast<int>(rng.uniform_int(0, max_t0));

  FramePair pair;
  pair.sequence = &index.sequences[seq_pos];
  pair.t0 = t0;
  pair.gap = gap;
  pair.image0 = load_frame(seq, t0);
  pair.image1 = load_frame(seq, t0 + gap);
  pair.frame0 = &pair.sequence->frames[t0];
  pair.frame1 = &pair.sequence->frames[t0 + gap];
  return pair;
}

ImageU8 sample_frame(const DatasetIndex& index, CounterRng& rng) {
  if (index.sequences.empty()) throw DataError("empty dataset");
  const auto seq_pos = static_cast<size_t>(
      rng.uniform_int(0, static_cast<int64_t>(index.sequences.size()) - 1));
  const auto& seq = index.sequences[seq_pos];
  const int f = static_cast<int>(
      rng.uniform_int(0, static_cast<int64_t>(seq.frames.size()) - 1));
  return load_frame(seq, f);
}

}  // namespace cycconf::datapipe
