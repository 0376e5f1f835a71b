#include "pianotx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pianotx/errors.hpp"

namespace pianotx::metrics {

PRF prf_from_counts(int matched, int n_ref, int n_est) {
  PRF out;
  out.matched = matched;
  out.precision = n_est > 0 ? (double)matched / n_est : 0.0;
  out.recall = n_ref > 0 ? (double)matched / n_ref : 0.0;
  out.f1 = out.precision + out.recall > 0.0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

namespace {

bool try_augment(int u, const std::vector<std::vector<int>>& adj,
                 std::vector<int>& match_right, std::vector<char>& visited) {
  for (int v : adj[u]) {
    if (visited[v]) continue;
    visited[v] = 1;
    if (match_right[v] < 0 || try_augment(match_right[v], adj, match_right, visited)) {
      match_right[v] = u;
      return true;
    }
  }
  return false;
}

}  // namespace

int max_bipartite_matching(int n_right, const std::vector<std::vector<int>>& adj) {
  std::vector<int> match_right(n_right, -1);
  std::vector<char> visited(n_right);
  int matched = 0;
  for (int u = 0; u < (int)adj.size(); ++u) {
    std::fill(visited.begin(), visited.end(), 0);
    if (try_augment(u, adj, match_right, visited)) ++matched;
  }
  return matched;
}

PRF frame_prf(const RowMatrix& pred, const RowMatrix& target, double threshold) {
  if (pred.rows != target.rows || pred.cols != target.cols)
    throw NumericError("frame_prf: shape mismatch");
  long tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < pred.v.size(); ++i) {
    const bool p = pred.v[i] > threshold;
    const bool t = target.v[i] > 0.5;
    tp += p && t;
    fp += p && !t;
    fn += !p && t;
  }
  return prf_from_counts((int)tp, (int)(tp + fn), (int)(tp + fp));
}

PRF windowed_timing_f1(const std::vector<double>& ref_times,
                       const std::vector<double>& est_times, double tol_s) {
  std::vector<std::vector<int>> adj(ref_times.size());
  for (size_t i = 0; i < ref_times.size(); ++i)
    for (size_t j = 0; j < est_times.size(); ++j)
      if (std::abs(ref_times[i] - est_times[j]) <= tol_s) adj[i].push_back((int)j);
  const int matched = max_bipartite_matching((int)est_times.size(), adj);
  return prf_from_counts(matched, (int)ref_times.size(), (int)est_times.size());
}

VelocityError velocity_mae_std(const RowMatrix& pred_velocity,
                               const TargetRolls& targets) {
  if (pred_velocity.rows != targets.velocity.rows ||
      pred_velocity.cols != targets.velocity.cols)
    throw NumericError("velocity_mae_std: shape mismatch");
  std::vector<double> errs;
  for (int t = 0; t < pred_velocity.rows; ++t)
    for (int c = 0; c < pred_velocity.cols; ++c)
      if (targets.onset.at(t, c) == 1.0)
        errs.push_back(
            std::abs(pred_velocity.at(t, c) - targets.velocity.at(t, c)) * 128.0);
  VelocityError out;
  if (errs.empty()) return out;
  out.defined = true;
  double sum = 0.0;
  for (double e : errs) sum += e;
  out.mae = sum / errs.size();
  double var = 0.0;
  for (double e : errs) var += (e - out.mae) * (e - out.mae);
  out.std_dev = std::sqrt(var / errs.size());
  return out;
}

PRF note_prf(const std::vector<NoteEvent>& ref, const std::vector<NoteEvent>& est,
             NoteLevel level, const Tolerances& tol) {
  // candidate pairs under pitch/onset (and offset for note3+)
  std::vector<std::vector<int>> adj(ref.size());
  auto pair_valid_base = [&](const NoteEvent& r, const NoteEvent& e) {
    if (r.pitch != e.pitch) return false;
    if (std::abs(r.onset_s - e.onset_s) > tol.onset_tol_s) return false;
    if (level != NoteLevel::kNote2) {
      const double off_tol =
          std::max(tol.offset_tol_s, tol.offset_ratio * (r.offset_s - r.onset_s));
      if (std::abs(r.offset_s - e.offset_s) > off_tol) return false;
    }
    return true;
  };

  double vel_scale = 1.0;
  if (level == NoteLevel::kNote4 && tol.velocity_rescale) {
    // single least-squares scalar over the candidate pairs
    double num = 0.0, den = 0.0;
    for (const auto& r : ref)
      for (const auto& e : est)
        if (pair_valid_base(r, e)) {
          num += (r.velocity / 127.0) * (e.velocity / 127.0);
          den += (e.velocity / 127.0) * (e.velocity / 127.0);
        }
    if (den > 0.0) vel_scale = num / den;
  }

  for (size_t i = 0; i < ref.size(); ++i)
    for (size_t j = 0; j < est.size(); ++j) {
      if (!pair_valid_base(ref[i], est[j])) continue;
      if (level == NoteLevel::kNote4) {
        const double vr = ref[i].velocity / 127.0;
        const double ve = est[j].velocity / 127.0;
        if (std::abs(vr - vel_scale * ve) > tol.velocity_tol) continue;
      }
      adj[i].push_back((int)j);
    }
  const int matched = max_bipartite_matching((int)est.size(), adj);
  return prf_from_counts(matched, (int)ref.size(), (int)est.size());
}

namespace {

RowMatrix binarize(const RowMatrix& m, double threshold) {
  RowMatrix out(m.rows, m.cols);
  for (size_t i = 0; i < m.v.size(); ++i) out.v[i] = m.v[i] > threshold ? 1.0 : 0.0;
  return out;
}

}  // namespace

PieceReport evaluate_piece(const std::vector<NoteEvent>& ref_notes,
                           const std::vector<NoteEvent>& est_notes,
                           const TargetRolls& pred_rolls, const TargetRolls& targets,
                           const Tolerances& tol, double frame_threshold) {
  if (pred_rolls.frame.rows != targets.frame.rows)
    throw NumericError("evaluate_piece: misaligned roll lengths");
  PieceReport rep;
  rep.frame = frame_prf(pred_rolls.frame, targets.frame, frame_threshold);
  rep.onset_s =
      frame_prf(pred_rolls.onset, binarize(targets.onset, 0.5), frame_threshold);
  rep.offset_s =
      frame_prf(pred_rolls.offset, binarize(targets.offset, 0.5), frame_threshold);

  std::vector<double> ref_on, ref_off, est_on, est_off;
  for (const auto& n : ref_notes) {
    ref_on.push_back(n.onset_s);
    ref_off.push_back(n.offset_s);
  }
  for (const auto& n : est_notes) {
    est_on.push_back(n.onset_s);
    est_off.push_back(n.offset_s);
  }
  rep.onset_t = windowed_timing_f1(ref_on, est_on, tol.onset_tol_s);
  rep.offset_t = windowed_timing_f1(ref_off, est_off, tol.offset_tol_s);
  rep.velocity = velocity_mae_std(pred_rolls.velocity, targets);
  rep.note2 = note_prf(ref_notes, est_notes, NoteLevel::kNote2, tol);
  rep.note3 = note_prf(ref_notes, est_notes, NoteLevel::kNote3, tol);
  rep.note4 = note_prf(ref_notes, est_notes, NoteLevel::kNote4, tol);
  return rep;
}

PieceReport mean_report(const std::vector<PieceReport>& pieces) {
  PieceReport m;
  if (pieces.empty()) return m;
  int vel_count = 0;
  auto acc_prf = [](PRF& dst, const PRF& src) {
    dst.precision += src.precision;
    dst.recall += src.recall;
    dst.f1 += src.f1;
    dst.matched += src.matched;
  };
  for (const auto& p : pieces) {
    acc_prf(m.frame, p.frame);
    acc_prf(m.onset_s, p.onset_s);
    acc_prf(m.offset_s, p.offset_s);
    acc_prf(m.onset_t, p.onset_t);
    acc_prf(m.offset_t, p.offset_t);
    acc_prf(m.note2, p.note2);
    acc_prf(m.note3, p.note3);
    acc_prf(m.note4, p.note4);
    if (p.velocity.defined) {
      m.velocity.mae += p.velocity.mae;
      m.velocity.std_dev += p.velocity.std_dev;
      ++vel_count;
    }
  }
  const double n = (double)pieces.size();
  auto div_prf = [n](PRF& p) {
    p.precision /= n;
    p.recall /= n;
    p.f1 /= n;
  };
  div_prf(m.frame);
  div_prf(m.onset_s);
  div_prf(m.offset_s);
  div_prf(m.onset_t);
  div_prf(m.offset_t);
  div_prf(m.note2);
  div_prf(m.note3);
  div_prf(m.note4);
  if (vel_count > 0) {
    m.velocity.defined = true;
    m.velocity.mae /= vel_count;
    m.velocity.std_dev /= vel_count;
  }
  return m;
}

std::string report_table(const std::vector<std::string>& names,
                         const std::vector<PieceReport>& pieces,
                         const PieceReport& mean) {
  std::string out;
  char buf[320];
  std::snprintf(buf, sizeof(buf), "%-20s %8s %8s %8s %8s %8s %8s %8s %8s %8s %8s\n",
                "piece", "frameF1", "on_F1s", "on_F1t", "off_F1s", "off_F1t",
                "vel_MAE", "vel_STD", "note2F1", "note3F1", "note4F1");
  out += buf;
  auto row = [&](const std::string& name, const PieceReport& r) {
    char mae[16], sd[16];
    if (r.velocity.defined) {
      std::snprintf(mae, sizeof(mae), "%8.4f", r.velocity.mae);
      std::snprintf(sd, sizeof(sd), "%8.4f", r.velocity.std_dev);
    } else {
      std::snprintf(mae, sizeof(mae), "%8s", "n/a");
      std::snprintf(sd, sizeof(sd), "%8s", "n/a");
    }
    std::snprintf(buf, sizeof(buf),
                  "%-20s %8.4f %8.4f %8.4f %8.4f %8.4f %s %s %8.4f %8.4f %8.4f\n",
                  name.c_str(), r.frame.f1, r.onset_s.f1, r.onset_t.f1, r.offset_s.f1,
                  r.offset_t.f1, mae, sd, r.note2.f1, r.note3.f1, r.note4.f1);
    out += buf;
  };
  for (size_t i = 0; i < pieces.size(); ++i) row(names[i], pieces[i]);
  row("MEAN", mean);
  return out;
}

std::string report_records(const std::vector<std::string>& names,
                           const std::vector<PieceReport>& pieces,
                           const PieceReport& mean) {
  std::string out;
  char buf[160];
  auto emit = [&](const std::string& piece, const PieceReport& r) {
    auto rec = [&](const char* metric, double v) {
      std::snprintf(buf, sizeof(buf), "%s\t%s\t%.6f\n", piece.c_str(), metric, v);
      out += buf;
    };
    auto rec_prf = [&](const char* base, const PRF& p) {
      std::string b(base);
      rec((b + "_precision").c_str(), p.precision);
      rec((b + "_recall").c_str(), p.recall);
      rec((b + "_f1").c_str(), p.f1);
    };
    rec_prf("frame", r.frame);
    rec_prf("onset_strict", r.onset_s);
    rec_prf("onset_timing", r.onset_t);
    rec_prf("offset_strict", r.offset_s);
    rec_prf("offset_timing", r.offset_t);
    if (r.velocity.defined) {
      rec("velocity_mae", r.velocity.mae);
      rec("velocity_std", r.velocity.std_dev);
    }
    rec_prf("note2", r.note2);
    rec_prf("note3", r.note3);
    rec_prf("note4", r.note4);
  };
  for (size_t i = 0; i < pieces.size(); ++i) emit(names[i], pieces[i]);
  emit("MEAN", mean);
  return out;
}

}  // namespace pianotx::metrics
