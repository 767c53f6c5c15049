#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedmcp/data.hpp"
#include "fedmcp/losses.hpp"
#include "fedmcp/model.hpp"
#include "fedmcp/optimizer.hpp"
#include "fedmcp/rng.hpp"
#include "fedmcp/similarity.hpp"

namespace fedmcp {

enum class Method { FedMCP, FedAvgPEFT, LocalOnly };
enum class ContrastiveAnchor { PrivateAnchor, GlobalAnchor };
enum class AggregationWeighting { Uniform, BySampleCount };
enum class Split { Validation, Test };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

/// Audit log of every tensor that crosses the wire. Payload bytes are kept so
/// tests can scan them for private-parameter fingerprints.
struct WireRecord {
  enum class Direction { Broadcast, Upload };
  std::size_t round = 0;
  Direction direction = Direction::Broadcast;
  std::size_t client_id = 0;
  std::vector<std::string> tensor_names;
  std::size_t byte_count = 0;
  std::vector<std::uint8_t> payload;
};

struct WireTrace {
  std::vector<WireRecord> records;

  std::size_t bytes_for(std::size_t round, std::size_t client_id,
                        WireRecord::Direction direction) const;
};

struct StepLosses {
  double l_a = 0.0, l_b = 0.0, l_c = 0.0, total = 0.0;
};

/// Thrown when a training step produces a non-finite loss; carries the recent
/// per-step breakdowns for the diagnostic dump.
class NumericalAbortError : public std::runtime_error {
 public:
  NumericalAbortError(std::size_t client_id, std::size_t round, std::vector<StepLosses> history)
      : std::runtime_error("numerical abort: non-finite loss on client " +
                           std::to_string(client_id) + " in round " + std::to_string(round)),
        client_id(client_id),
        round(round),
        history(std::move(history)) {}

  std::size_t client_id;
  std::size_t round;
  std::vector<StepLosses> history;
};

struct ClientState {
  std::size_t id = 0;
  Method method = Method::FedMCP;
  ModelParams model;
  DatasetSplits data;
  LossWeights loss_weights;
  SimilarityMetric metric;
  Pooling pooling = Pooling::MeanPool;
  ContrastiveAnchor anchor = ContrastiveAnchor::PrivateAnchor;
  std::size_t local_epochs = 1;
  std::size_t batch_size = 16;
  std::unique_ptr<AdamOptimizer> optimizer;
  Rng shuffle_rng{0};
  std::vector<StepLosses> step_history;  // losses of the most recent round
  int fail_at_round = -1;                // test hook: inject a client failure

  StepLosses round_mean_losses() const;
};

struct ServerState {
  std::size_t round = 1;  // next round to execute, 1-based
  AdapterSet theta_g_avg;
  std::vector<std::size_t> client_ids;
  AggregationWeighting weighting = AggregationWeighting::Uniform;
};

/// One client's local phase: overwrite theta_g with the broadcast, keep a
/// frozen copy as the Z source, run E epochs of Adam on the client objective,
/// and hand back only theta_g.
AdapterSet local_update(ClientState& client, const AdapterSet& theta_g_broadcast,
                        std::size_t round);

/// One communication round over all registered clients: broadcast, local
/// updates (optionally in parallel), upload, aggregate. Appends exactly two
/// wire records per client. Any client failure aborts the round before
/// aggregation; the partial trace is preserved.
void run_round(ServerState& server, std::vector<ClientState>& clients, WireTrace& trace,
               bool parallel_clients = false);

/// Accuracy of the personalized (full-path) model on a data split.
double evaluate(const ClientState& client, Split split);

struct RunSettings {
  Method method = Method::FedMCP;
  EncoderConfig model;
  LossWeights loss_weights;
  OptimizerConfig optimizer;
  std::size_t rounds = 25;
  std::size_t local_epochs = 1;
  std::vector<SyntheticTaskSpec> tasks;
  std::uint64_t run_seed = 1;
  SimilarityMetric metric;
  Pooling pooling = Pooling::MeanPool;
  ContrastiveAnchor anchor = ContrastiveAnchor::PrivateAnchor;
  AggregationWeighting weighting = AggregationWeighting::Uniform;
  bool parallel_clients = false;
  std::string checkpoint_dir;  // empty: no checkpoints written
};

struct ExperimentRow {
  std::size_t round = 0;
  std::size_t client_id = 0;
  Split split = Split::Validation;
  double accuracy = 0.0;
  StepLosses losses;  // mean over the round's training steps (zeros at round 0)
  std::size_t wire_bytes_up = 0;
  std::size_t wire_bytes_down = 0;
};

struct ExperimentRunResult {
  std::vector<ExperimentRow> rows;
  WireTrace trace;
  ParamCounts param_counts;
  std::vector<double> final_test_accuracy;  // per client
};

/// Builds the federation for one seed and executes T rounds, evaluating every
/// client on validation and test after each round (and once before round 1).
ExperimentRunResult run_experiment(const RunSettings& settings);

/// Constructs server + clients without running any round (used by tests).
struct FederationSetup {
  ServerState server;
  std::vector<ClientState> clients;
};
FederationSetup build_federation_state(const RunSettings& settings);

}  // namespace fedmcp
