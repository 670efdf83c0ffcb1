#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spanrank/errors.hpp"
#include "spanrank/filterbank.hpp"
#include "spanrank/image.hpp"
#include "spanrank/instance_set.hpp"
#include "spanrank/projector.hpp"
#include "spanrank/ranksel.hpp"

namespace spanrank {

/// Shortest-faithful decimal formatting helpers (locale independent).
std::string format_general(double value, int significant_digits = 17);
std::string format_fixed(double value, int decimals);

// ---- labeled instance sets -------------------------------------------------

/// CSV with header f0,...,f{d-1},label; one instance per row.
LabeledInstanceSet read_instances_csv(const std::string& path);
void write_instances_csv(const std::string& path, const LabeledInstanceSet& set);

/// Binary alternative: magic FLIM, then u64le N, d, c, then N*d f64le values
/// row-major, then N u32le labels.
LabeledInstanceSet read_instances_binary(const std::string& path);
void write_instances_binary(const std::string& path, const LabeledInstanceSet& set);

/// Dispatches on the FLIM magic, falling back to CSV.
LabeledInstanceSet read_instances(const std::string& path);

// ---- dense matrices ----------------------------------------------------------

/// Headerless CSV matrix, 17 significant digits per value.
void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_csv(const std::string& path);

// ---- solver and ranking outputs ---------------------------------------------

/// iter,H,H1,H2 with the initial point as iteration 0.
void write_trace_csv(const std::string& path, const SolverTrace& trace);

/// index,score,selected plus optional crit_0..crit_{c-1} columns.
void write_ranking_csv(const std::string& path, const RankingReport& report,
                       bool include_criterion = false);
RankingReport read_ranking_csv(const std::string& path);

// ---- filter specs -------------------------------------------------------------

/// index,kind,scale,orientation,tau,resolution with optional
/// initial_loss,final_loss columns.
struct SpecRecord {
  FilterSpec spec;
  std::optional<double> initial_loss;
  std::optional<double> final_loss;
};
void write_specs_csv(const std::string& path, const std::vector<SpecRecord>& specs);
std::vector<SpecRecord> read_specs_csv(const std::string& path);

// ---- dataset manifests ---------------------------------------------------------

struct ManifestEntry {
  std::string path;  // resolved against the manifest directory
  int label = 0;
  bool is_train = true;
};

/// CSV with header path,label,split; split is "train" or "test". Paths are
/// resolved relative to the manifest location.
std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

// ---- images ----------------------------------------------------------------------

/// Binary PGM (P5) and PPM (P6), 8-bit only.
Image8 read_netpbm(const std::string& path);
void write_netpbm(const std::string& path, const Image8& image);

// ---- plain key = value configs ----------------------------------------------------

/// Plain-text `key = value` store with lossless round-trip; used for run
/// configuration files.
class KeyValueConfig {
 public:
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set_double(const std::string& key, double value) { values_[key] = format_general(value); }
  void set_int(const std::string& key, long long value) { values_[key] = std::to_string(value); }

  bool contains(const std::string& key) const { return values_.count(key) > 0; }
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;

  std::string serialize() const;
  static KeyValueConfig parse(const std::string& text);

  void save(const std::string& path) const;
  static KeyValueConfig load(const std::string& path);

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// ---- small file helpers -------------------------------------------------------------

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace spanrank
