#include "cycconf/inspect.hpp"

#include <cstdio>
#include <filesystem>

#include "cycconf/util.hpp"

namespace fs = std::filesystem;

namespace cycconf::inspect {

InspectSummary inspect_matching(const det::DetectorModel& model,
                                const datapipe::DatasetIndex& index,
                                int n_pairs, uint64_t seed, int gap,
                                double objectness_threshold,
                                cycmatch::MatchMode mode, double temperature,
                                const std::string& out_dir) {
  if (n_pairs < 0) throw ContractError("inspect_matching: negative pair count");
  fs::create_directories(out_dir);

  CounterRng rng(CounterRng::derive(seed, 21));
  InspectSummary summary;
  summary.pairs_requested = n_pairs;

  std::string summary_csv = "pair,sequence,t0,n0,n1,entropy\n";
  std::string emb_csv = "pair,frame,row,score";
  for (int d = 0; d < model.config().embedding_dim; ++d)
    emb_csv += ",e" + std::to_string(d);
  emb_csv += "\n";

  double entropy_acc = 0.0;
  for (int p = 0; p < n_pairs; ++p) {
    const auto pair = datapipe::sample_frame_pair(index, rng, gap);

    det::ProposalSet sel[2];
    det::EncodeResult enc[2];
    const ImageU8* images[2] = {&pair.image0, &pair.image1};
    for (int f = 0; f < 2; ++f) {
      const auto bt = model.backbone_forward(image_to_tensor(*images[f]));
      const auto rpn = model.rpn_forward(bt.feature());
      sel[f] = det::select_proposals(model.propose(rpn), objectness_threshold,
                                     model.config().proposal_cap);
      enc[f] = model.encode_instances(bt.feature(), sel[f].boxes);
    }
    const int n0 = enc[0].embeddings.rows();
    const int n1 = enc[1].embeddings.rows();

    summary_csv += std::to_string(p) + "," + pair.sequence->id + "," +
                   std::to_string(pair.t0) + "," + std::to_string(n0) + "," +
                   std::to_string(n1) + ",";
    if (n0 == 0 || n1 == 0) {
      summary_csv += "\n";
      ++summary.pairs_skipped;
      continue;
    }

    const Mat alpha = cycmatch::forward_match_weights(
        cycmatch::pairwise_sq_dist(enc[0].embeddings, enc[1].embeddings), mode,
        temperature);
    const double entropy = cycmatch::matching_entropy(alpha);
    summary_csv += format_double(entropy) + "\n";
    entropy_acc += entropy;
    ++summary.pairs_written;

    std::string weights;
    for (int i = 0; i < alpha.rows(); ++i) {
      for (int j = 0; j < alpha.cols(); ++j)
        weights += (j ? "," : "") + format_double(alpha(i, j));
      weights += "\n";
    }
    char name[64];
    std::snprintf(name, sizeof(name), "weights_pair_%03d.csv", p);
    atomic_write_file((fs::path(out_dir) / name).string(), weights);

    for (int f = 0; f < 2; ++f) {
      for (int r = 0; r < enc[f].embeddings.rows(); ++r) {
        emb_csv += std::to_string(p) + "," + std::to_string(f) + "," +
                   std::to_string(r) + "," +
                   format_double(sel[f].boxes[r].score);
        for (int d = 0; d < enc[f].embeddings.cols(); ++d)
          emb_csv += "," + format_double(enc[f].embeddings(r, d));
        emb_csv += "\n";
      }
    }
  }

  summary.mean_entropy =
      summary.pairs_written > 0 ? entropy_acc / summary.pairs_written : 0.0;
  atomic_write_file((fs::path(out_dir) / "matching_summary.csv").string(),
                    summary_csv);
  atomic_write_file((fs::path(out_dir) / "embeddings.csv").string(), emb_csv);
  return summary;
}

}  // namespace cycconf::inspect
