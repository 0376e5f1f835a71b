#pragma once

#include <string>
#include <vector>

#include "pianotx/matrix.hpp"
#include "pianotx/midi.hpp"
#include "pianotx/targets.hpp"

// Evaluation measures built from their definitions: strict frame scores,
// windowed timing scores, velocity error statistics, and note-level
// precision/recall/F1 under maximum-cardinality one-to-one matching.

namespace pianotx::metrics {

struct Tolerances {
  double onset_tol_s = 0.05;
  double offset_tol_s = 0.05;
  double offset_ratio = 0.2;   // note3 offset tolerance = max(tol_s, ratio * dur)
  double velocity_tol = 0.1;   // in normalized [0,1] velocity units
  bool velocity_rescale = true;
};

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int matched = 0;
};

PRF prf_from_counts(int matched, int n_ref, int n_est);

// Kuhn's augmenting-path maximum matching; adj[i] lists right nodes reachable
// from left node i. Deterministic for a fixed adjacency order.
int max_bipartite_matching(int n_right, const std::vector<std::vector<int>>& adj);

// element-wise TP/FP/FN after binarizing pred at `threshold` (target must
// already be binary)
PRF frame_prf(const RowMatrix& pred, const RowMatrix& target, double threshold);

// one-to-one matching of event times with |ref - est| <= tol_s
PRF windowed_timing_f1(const std::vector<double>& ref_times,
                       const std::vector<double>& est_times, double tol_s);

struct VelocityError {
  double mae = 0.0;
  double std_dev = 0.0;
  bool defined = false;  // false when the piece has no onset-peak frames
};

// absolute error in MIDI velocity units over frames where the onset target
// peaks at exactly 1
VelocityError velocity_mae_std(const RowMatrix& pred_velocity,
                               const TargetRolls& targets);

enum class NoteLevel { kNote2, kNote3, kNote4 };

PRF note_prf(const std::vector<NoteEvent>& ref, const std::vector<NoteEvent>& est,
             NoteLevel level, const Tolerances& tol);

struct PieceReport {
  PRF frame;              // frame roll F1
  PRF onset_s, offset_s;  // strict frame-level scores of the event rolls
  PRF onset_t, offset_t;  // windowed timing scores (50 ms default)
  VelocityError velocity;
  PRF note2, note3, note4;
};

// Rolls are compared against rendered targets; note scores compare the two
// note lists; F1-s binarizes ramp targets at 0.5.
PieceReport evaluate_piece(const std::vector<NoteEvent>& ref_notes,
                           const std::vector<NoteEvent>& est_notes,
                           const TargetRolls& pred_rolls, const TargetRolls& targets,
                           const Tolerances& tol, double frame_threshold = 0.3);

PieceReport mean_report(const std::vector<PieceReport>& pieces);

// aligned text table; one row per piece plus the aggregate
std::string report_table(const std::vector<std::string>& names,
                         const std::vector<PieceReport>& pieces,
                         const PieceReport& mean);

// line-delimited records: piece<TAB>metric<TAB>value
std::string report_records(const std::vector<std::string>& names,
                           const std::vector<PieceReport>& pieces,
                           const PieceReport& mean);

}  // namespace pianotx::metrics
