#include "fedmcp/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "fedmcp/rng.hpp"

namespace fedmcp {

namespace {

constexpr int kBalanceRetries = 100;

struct TaskParams {
  int pattern_first = 0;
  int pattern_second = 0;
  int marked_residue = 0;
  int target_token = 0;
};

int random_content_token(const SyntheticTaskSpec& spec, Rng& rng) {
  return kFirstContentToken +
         static_cast<int>(rng.next_below(spec.vocab_size - kFirstContentToken));
}

/// Rule parameters are a pure function of the spec seed, independent of the
/// sample-generation stream, so the label oracle can recompute them.
TaskParams task_params(const SyntheticTaskSpec& spec) {
  Rng rng(derive_seed(spec.seed, "task-params"));
  TaskParams p;
  p.pattern_first = random_content_token(spec, rng);
  do {
    p.pattern_second = random_content_token(spec, rng);
  } while (p.pattern_second == p.pattern_first);
  p.marked_residue = static_cast<int>(rng.next_below(3));
  p.target_token = random_content_token(spec, rng);
  return p;
}

bool is_pair_task(TaskKind kind) {
  return kind == TaskKind::PairEquality || kind == TaskKind::FirstLastMatch;
}

// Two-segment layout: [CLS] seg1 [SEP] seg2 with |seg1| == |seg2|.
std::size_t pair_segment_len(std::size_t seq_len) { return (seq_len - 2) / 2; }
std::size_t pair_sep_position(std::size_t seq_len) { return 1 + pair_segment_len(seq_len); }

int majority_bucket(const SyntheticTaskSpec& spec, const std::vector<int>& tokens) {
  const std::size_t k = spec.num_classes;
  const std::size_t content = spec.vocab_size - kFirstContentToken;
  std::vector<std::size_t> counts(k, 0);
  for (int t : tokens) {
    if (t < kFirstContentToken) continue;
    std::size_t bucket = static_cast<std::size_t>(t - kFirstContentToken) * k / content;
    counts[bucket]++;
  }
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

}  // namespace

std::string task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::MajorityToken: return "majority_token";
    case TaskKind::ContainsPattern: return "contains_pattern";
    case TaskKind::PairEquality: return "pair_equality";
    case TaskKind::ParityOfMarkedTokens: return "parity_of_marked_tokens";
    case TaskKind::FirstLastMatch: return "first_last_match";
    case TaskKind::CountThreshold: return "count_threshold";
  }
  throw std::logic_error("task kind: unknown enum value");
}

TaskKind task_kind_from_name(const std::string& name) {
  if (name == "majority_token") return TaskKind::MajorityToken;
  if (name == "contains_pattern") return TaskKind::ContainsPattern;
  if (name == "pair_equality") return TaskKind::PairEquality;
  if (name == "parity_of_marked_tokens") return TaskKind::ParityOfMarkedTokens;
  if (name == "first_last_match") return TaskKind::FirstLastMatch;
  if (name == "count_threshold") return TaskKind::CountThreshold;
  throw std::invalid_argument("task kind: unknown name '" + name + "'");
}

std::size_t task_num_classes(TaskKind kind) {
  switch (kind) {
    case TaskKind::MajorityToken: return 3;
    case TaskKind::CountThreshold: return 3;
    default: return 2;
  }
}

void SyntheticTaskSpec::validate() const {
  if (vocab_size < kFirstContentToken + 8) {
    throw std::invalid_argument("task spec: vocabulary too small for content tokens");
  }
  if (seq_len < 6) throw std::invalid_argument("task spec: seq_len must be >= 6");
  if (is_pair_task(task_kind) && seq_len % 2 != 0) {
    throw std::invalid_argument("task spec: pair tasks need an even seq_len");
  }
  if (label_noise < 0.0 || label_noise >= 0.5) {
    throw std::invalid_argument("task spec: label_noise must lie in [0, 0.5)");
  }
  if (samples_per_client < 10) {
    throw std::invalid_argument("task spec: need at least 10 samples per client");
  }
  const std::size_t canonical = task_num_classes(task_kind);
  const bool flexible =
      task_kind == TaskKind::MajorityToken || task_kind == TaskKind::CountThreshold;
  if (num_classes != canonical && !(flexible && num_classes == 2)) {
    throw std::invalid_argument("task spec: num_classes " + std::to_string(num_classes) +
                                " invalid for task " + task_kind_name(task_kind));
  }
}

int rule_label(const SyntheticTaskSpec& spec, const std::vector<int>& tokens) {
  const TaskParams params = task_params(spec);
  switch (spec.task_kind) {
    case TaskKind::MajorityToken:
      return majority_bucket(spec, tokens);
    case TaskKind::ContainsPattern: {
      for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
        if (tokens[i] == params.pattern_first && tokens[i + 1] == params.pattern_second) {
          return 1;
        }
      }
      return 0;
    }
    case TaskKind::PairEquality: {
      const std::size_t sep = pair_sep_position(spec.seq_len);
      std::vector<int> a(tokens.begin() + 1, tokens.begin() + static_cast<long>(sep));
      std::vector<int> b(tokens.begin() + static_cast<long>(sep) + 1, tokens.end());
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      return a == b ? 1 : 0;
    }
    case TaskKind::ParityOfMarkedTokens: {
      int count = 0;
      for (int t : tokens) {
        if (t >= kFirstContentToken && (t - kFirstContentToken) % 3 == params.marked_residue) {
          ++count;
        }
      }
      return count % 2;
    }
    case TaskKind::FirstLastMatch:
      return tokens[1] == tokens.back() ? 1 : 0;
    case TaskKind::CountThreshold: {
      int count = 0;
      for (int t : tokens) {
        if (t == params.target_token) ++count;
      }
      if (spec.num_classes == 2) return count >= 2 ? 1 : 0;
      if (count == 0) return 0;
      return count <= 2 ? 1 : 2;
    }
  }
  throw std::logic_error("rule_label: unknown task kind");
}

namespace {

std::vector<int> generate_sequence(const SyntheticTaskSpec& spec, const TaskParams& params,
                                   Rng& rng) {
  const std::size_t s = spec.seq_len;
  std::vector<int> tokens(s);
  tokens[0] = kClsToken;
  if (is_pair_task(spec.task_kind)) {
    const std::size_t sep = pair_sep_position(s);
    for (std::size_t i = 1; i < s; ++i) {
      tokens[i] = (i == sep) ? kSepToken : random_content_token(spec, rng);
    }
  } else {
    for (std::size_t i = 1; i < s; ++i) tokens[i] = random_content_token(spec, rng);
  }

  switch (spec.task_kind) {
    case TaskKind::MajorityToken: {
      // Bias roughly half the positions toward one bucket so every class is
      // reachable; the rule recomputes the actual majority.
      const std::size_t k = spec.num_classes;
      const std::size_t content = spec.vocab_size - kFirstContentToken;
      const std::size_t bucket = rng.next_below(k);
      const std::size_t lo = bucket * content / k;
      const std::size_t hi = (bucket + 1) * content / k;
      for (std::size_t i = 1; i < s; ++i) {
        if (rng.next_double() < 0.5) {
          tokens[i] = kFirstContentToken + static_cast<int>(lo + rng.next_below(hi - lo));
        }
      }
      break;
    }
    case TaskKind::ContainsPattern: {
      if (rng.next_double() < 0.5) {
        const std::size_t pos = 1 + rng.next_below(s - 2);
        tokens[pos] = params.pattern_first;
        tokens[pos + 1] = params.pattern_second;
      }
      break;
    }
    case TaskKind::PairEquality: {
      if (rng.next_double() < 0.5) {
        const std::size_t sep = pair_sep_position(s);
        const std::size_t len = pair_segment_len(s);
        std::vector<std::size_t> order(len);
        for (std::size_t i = 0; i < len; ++i) order[i] = i;
        rng.shuffle(order);
        for (std::size_t i = 0; i < len; ++i) tokens[sep + 1 + i] = tokens[1 + order[i]];
      }
      break;
    }
    case TaskKind::ParityOfMarkedTokens:
      break;  // unconstrained; parity of random counts is already near 50/50
    case TaskKind::FirstLastMatch: {
      if (rng.next_double() < 0.5) tokens[s - 1] = tokens[1];
      break;
    }
    case TaskKind::CountThreshold: {
      // Remove accidental occurrences, then plant an exact count.
      for (std::size_t i = 1; i < s; ++i) {
        while (tokens[i] == params.target_token) {
          tokens[i] = random_content_token(spec, rng);
        }
      }
      const std::size_t bucket = rng.next_below(spec.num_classes == 2 ? 2 : 3);
      std::size_t count = 0;
      if (spec.num_classes == 2) {
        count = (bucket == 0) ? rng.next_below(2) : 2 + rng.next_below(2);
      } else {
        count = (bucket == 0) ? 0 : (bucket == 1) ? 1 + rng.next_below(2) : 3 + rng.next_below(2);
      }
      std::vector<std::size_t> positions(s - 1);
      for (std::size_t i = 0; i < s - 1; ++i) positions[i] = i + 1;
      rng.shuffle(positions);
      for (std::size_t i = 0; i < count && i < positions.size(); ++i) {
        tokens[positions[i]] = params.target_token;
      }
      break;
    }
  }
  return tokens;
}

bool splits_have_all_classes(const DatasetSplits& splits, std::size_t num_classes) {
  for (const auto* split : {&splits.train, &splits.validation, &splits.test}) {
    std::vector<bool> seen(num_classes, false);
    for (const auto& row : *split) seen[static_cast<std::size_t>(row.label)] = true;
    for (bool s : seen) {
      if (!s) return false;
    }
  }
  return true;
}

DatasetSplits split_samples(std::vector<LabeledSequence> samples, Rng& rng) {
  const std::size_t n = samples.size();
  const std::size_t n_train = static_cast<std::size_t>(0.6 * static_cast<double>(n) + 0.5);
  const std::size_t n_val = static_cast<std::size_t>(0.2 * static_cast<double>(n) + 0.5);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  DatasetSplits splits;
  for (std::size_t i = 0; i < n; ++i) {
    LabeledSequence& row = samples[order[i]];
    if (i < n_train) {
      splits.train.push_back(std::move(row));
    } else if (i < n_train + n_val) {
      splits.validation.push_back(std::move(row));
    } else {
      splits.test.push_back(std::move(row));
    }
  }
  return splits;
}

}  // namespace

DatasetSplits generate_client_dataset(const SyntheticTaskSpec& spec) {
  spec.validate();
  const TaskParams params = task_params(spec);
  for (int attempt = 0; attempt < kBalanceRetries; ++attempt) {
    Rng rng(derive_seed(spec.seed, "samples", static_cast<std::uint64_t>(attempt)));
    std::vector<LabeledSequence> samples;
    samples.reserve(spec.samples_per_client);
    std::size_t positives = 0;
    for (std::size_t i = 0; i < spec.samples_per_client; ++i) {
      LabeledSequence row;
      row.tokens = generate_sequence(spec, params, rng);
      row.label = rule_label(spec, row.tokens);
      if (spec.label_noise > 0.0 && rng.next_double() < spec.label_noise) {
        const int k = static_cast<int>(spec.num_classes);
        row.label = (row.label + 1 + static_cast<int>(rng.next_below(
                                         static_cast<std::uint64_t>(k - 1)))) %
                    k;
      }
      if (row.label == 1) ++positives;
      samples.push_back(std::move(row));
    }
    if (spec.num_classes == 2) {
      const double share =
          static_cast<double>(positives) / static_cast<double>(spec.samples_per_client);
      if (share < 0.3 || share > 0.7) continue;
    }
    Rng split_rng(derive_seed(spec.seed, "split", static_cast<std::uint64_t>(attempt)));
    DatasetSplits splits = split_samples(std::move(samples), split_rng);
    if (!splits_have_all_classes(splits, spec.num_classes)) continue;
    return splits;
  }
  throw std::runtime_error("dataset generation: could not satisfy class balance for task " +
                           task_kind_name(spec.task_kind) + " after " +
                           std::to_string(kBalanceRetries) + " attempts");
}

std::vector<SyntheticTaskSpec> default_federation_specs(std::uint64_t master_seed,
                                                        std::size_t num_clients,
                                                        std::size_t vocab_size,
                                                        std::size_t seq_len,
                                                        std::size_t samples_per_client,
                                                        double label_noise) {
  static constexpr TaskKind kOrder[] = {
      TaskKind::MajorityToken,       TaskKind::ContainsPattern, TaskKind::PairEquality,
      TaskKind::ParityOfMarkedTokens, TaskKind::FirstLastMatch,  TaskKind::CountThreshold,
  };
  if (num_clients < 2 || num_clients > std::size(kOrder)) {
    throw std::invalid_argument("federation: number of clients must lie in [2, " +
                                std::to_string(std::size(kOrder)) + "]");
  }
  std::vector<SyntheticTaskSpec> specs;
  for (std::size_t i = 0; i < num_clients; ++i) {
    SyntheticTaskSpec spec;
    spec.task_kind = kOrder[i];
    spec.vocab_size = vocab_size;
    spec.seq_len = seq_len;
    spec.num_classes = task_num_classes(spec.task_kind);
    spec.label_noise = label_noise;
    spec.samples_per_client = samples_per_client;
    spec.seed = derive_seed(master_seed, "client-data", i);
    specs.push_back(spec);
  }
  return specs;
}

std::vector<DatasetSplits> build_federation(std::uint64_t master_seed,
                                            std::vector<SyntheticTaskSpec> specs) {
  if (specs.size() < 2) throw std::invalid_argument("federation: need at least 2 clients");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    for (std::size_t j = i + 1; j < specs.size(); ++j) {
      if (specs[i].task_kind == specs[j].task_kind) {
        throw std::invalid_argument("federation: duplicate task kind " +
                                    task_kind_name(specs[i].task_kind));
      }
    }
    if (specs[i].samples_per_client != specs[0].samples_per_client) {
      throw std::invalid_argument("federation: clients must have equal sample counts");
    }
  }
  std::vector<DatasetSplits> out;
  out.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    specs[i].seed = derive_seed(master_seed, "client-data", i);
    out.push_back(generate_client_dataset(specs[i]));
  }
  return out;
}

namespace {

void write_split(const std::vector<LabeledSequence>& rows, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("dataset export: cannot write " + path);
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.tokens.size(); ++i) {
      if (i) f << ' ';
      f << row.tokens[i];
    }
    f << '\t' << row.label << '\n';
  }
}

std::vector<LabeledSequence> read_split(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("dataset import: cannot read " + path);
  std::vector<LabeledSequence> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error("dataset import: malformed line in " + path);
    }
    LabeledSequence row;
    std::istringstream tokens(line.substr(0, tab));
    int t;
    while (tokens >> t) row.tokens.push_back(t);
    row.label = std::stoi(line.substr(tab + 1));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void export_dataset(const DatasetSplits& splits, const std::string& path) {
  write_split(splits.train, path + ".train.txt");
  write_split(splits.validation, path + ".validation.txt");
  write_split(splits.test, path + ".test.txt");
}

DatasetSplits import_dataset(const std::string& path) {
  DatasetSplits splits;
  splits.train = read_split(path + ".train.txt");
  splits.validation = read_split(path + ".validation.txt");
  splits.test = read_split(path + ".test.txt");
  return splits;
}

TokenBatch make_batch(const std::vector<LabeledSequence>& rows,
                      const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw std::invalid_argument("batch: empty index set");
  TokenBatch batch;
  batch.batch_size = indices.size();
  batch.seq_len = rows[indices[0]].tokens.size();
  batch.tokens.reserve(batch.batch_size * batch.seq_len);
  for (std::size_t idx : indices) {
    const auto& row = rows[idx];
    if (row.tokens.size() != batch.seq_len) {
      throw std::invalid_argument("batch: ragged sequence lengths");
    }
    batch.tokens.insert(batch.tokens.end(), row.tokens.begin(), row.tokens.end());
  }
  return batch;
}

std::vector<int> batch_labels(const std::vector<LabeledSequence>& rows,
                              const std::vector<std::size_t>& indices) {
  std::vector<int> labels;
  labels.reserve(indices.size());
  for (std::size_t idx : indices) labels.push_back(rows[idx].label);
  return labels;
}

}  // namespace fedmcp
