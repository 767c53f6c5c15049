#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedmcp/model.hpp"

namespace fedmcp {

// Reserved token ids; every sequence starts with kClsToken so CLS pooling is
// always well-defined. Pair tasks separate their two segments with kSepToken.
inline constexpr int kPadToken = 0;
inline constexpr int kClsToken = 1;
inline constexpr int kSepToken = 2;
inline constexpr int kFirstContentToken = 3;

enum class TaskKind {
  MajorityToken,
  ContainsPattern,
  PairEquality,
  ParityOfMarkedTokens,
  FirstLastMatch,
  CountThreshold,
};

std::string task_kind_name(TaskKind kind);
TaskKind task_kind_from_name(const std::string& name);
std::size_t task_num_classes(TaskKind kind);

struct LabeledSequence {
  std::vector<int> tokens;
  int label = 0;
};

struct SyntheticTaskSpec {
  TaskKind task_kind = TaskKind::MajorityToken;
  std::size_t vocab_size = 64;
  std::size_t seq_len = 16;
  std::size_t num_classes = 2;
  double label_noise = 0.0;
  std::size_t samples_per_client = 600;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DatasetSplits {
  std::vector<LabeledSequence> train;
  std::vector<LabeledSequence> validation;
  std::vector<LabeledSequence> test;

  std::size_t total() const { return train.size() + validation.size() + test.size(); }
};

/// Noise-free label the task rule assigns to a sequence; the test oracle for
/// generated data.
int rule_label(const SyntheticTaskSpec& spec, const std::vector<int>& tokens);

/// Generates one client's dataset: rule-labeled sequences, independent label
/// flips with probability label_noise, then a deterministic 6:2:2 split.
/// Binary tasks are regenerated (bounded retries) until the positive-class
/// share lies in [0.3, 0.7].
DatasetSplits generate_client_dataset(const SyntheticTaskSpec& spec);

/// One spec per client with per-client seeds derived from the master seed.
/// Task kinds must be pairwise distinct (cross-task heterogeneity).
std::vector<SyntheticTaskSpec> default_federation_specs(std::uint64_t master_seed,
                                                        std::size_t num_clients,
                                                        std::size_t vocab_size,
                                                        std::size_t seq_len,
                                                        std::size_t samples_per_client,
                                                        double label_noise);

std::vector<DatasetSplits> build_federation(std::uint64_t master_seed,
                                            std::vector<SyntheticTaskSpec> specs);

/// Line format: space-separated token ids, a tab, then the label.
void export_dataset(const DatasetSplits& splits, const std::string& path);
DatasetSplits import_dataset(const std::string& path);

/// Assembles a TokenBatch from dataset rows (all rows share seq_len).
TokenBatch make_batch(const std::vector<LabeledSequence>& rows,
                      const std::vector<std::size_t>& indices);
std::vector<int> batch_labels(const std::vector<LabeledSequence>& rows,
                              const std::vector<std::size_t>& indices);

}  // namespace fedmcp
