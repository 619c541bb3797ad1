#ifndef CYCCONF_INSPECT_HPP_
#define CYCCONF_INSPECT_HPP_

#include <string>

#include "cycconf/cycmatch.hpp"
#include "cycconf/datapipe.hpp"
#include "cycconf/detector.hpp"

namespace cycconf::inspect {

struct InspectSummary {
  int pairs_requested = 0;
  int pairs_written = 0;   // pairs with proposals above threshold in both frames
  int pairs_skipped = 0;
  double mean_entropy = 0.0;  // over written pairs
};

// Samples frame pairs, runs the detector + instance encoder, and writes:
//   weights_pair_%03d.csv  forward match-weight rows (one per t0 instance)
//   matching_summary.csv   pair, sequence, t0, n0, n1, entropy
//   embeddings.csv         pair, frame, row, score, e0..e{D-1}
InspectSummary inspect_matching(const det::DetectorModel& model,
                                const datapipe::DatasetIndex& index,
                                int n_pairs, uint64_t seed, int gap,
                                double objectness_threshold,
                                cycmatch::MatchMode mode, double temperature,
                                const std::string& out_dir);

}  // namespace cycconf::inspect

#endif  // CYCCONF_INSPECT_HPP_
