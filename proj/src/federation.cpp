#include "fedmcp/federation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <thread>

#include "fedmcp/ops.hpp"
#include "fedmcp/serialize.hpp"

namespace fedmcp {

namespace {

constexpr std::size_t kEvalBatch = 64;
constexpr std::size_t kStepHistoryLimit = 64;

NamedTensors theta_g_named(const AdapterSet& set) { return set.named("theta_g"); }

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::FedMCP: return "fedmcp";
    case Method::FedAvgPEFT: return "fedavg_peft";
    case Method::LocalOnly: return "local_only";
  }
  throw std::logic_error("method: unknown enum value");
}

Method method_from_name(const std::string& name) {
  if (name == "fedmcp") return Method::FedMCP;
  if (name == "fedavg_peft") return Method::FedAvgPEFT;
  if (name == "local_only") return Method::LocalOnly;
  throw std::invalid_argument("method: unknown name '" + name + "'");
}

std::size_t WireTrace::bytes_for(std::size_t round, std::size_t client_id,
                                 WireRecord::Direction direction) const {
  std::size_t total = 0;
  for (const auto& r : records) {
    if (r.round == round && r.client_id == client_id && r.direction == direction) {
      total += r.byte_count;
    }
  }
  return total;
}

StepLosses ClientState::round_mean_losses() const {
  StepLosses mean;
  if (step_history.empty()) return mean;
  for (const auto& s : step_history) {
    mean.l_a += s.l_a;
    mean.l_b += s.l_b;
    mean.l_c += s.l_c;
    mean.total += s.total;
  }
  const double n = static_cast<double>(step_history.size());
  mean.l_a /= n;
  mean.l_b /= n;
  mean.l_c /= n;
  mean.total /= n;
  return mean;
}

namespace {

/// One optimization step on one minibatch. Builds all forward paths on a
/// single tape so one backward covers every loss term.
StepLosses train_step(ClientState& client, const TokenBatch& batch,
                      const std::vector<int>& labels, const AdapterSet* z_snapshot) {
  Tape tape;
  ForwardResult full = forward_full(tape, client.model, batch, client.pooling);
  Tensor la = loss_a(tape, full.logits, labels);

  Tensor lb;
  Tensor lc;
  if (client.method == Method::FedMCP) {
    ForwardResult global = forward_global(tape, client.model, batch, client.pooling);
    lb = loss_b(tape, global.logits, labels);
    if (client.model.has_private_adapter() && z_snapshot != nullptr) {
      RepresentationBatch x = representation_with(tape, client.model,
                                                  AdapterSource::LocalPrivateOnly, batch,
                                                  client.pooling);
      RepresentationBatch y = global.rep;
      RepresentationBatch z = representation_with(tape, client.model,
                                                  AdapterSource::AverageGlobal, batch,
                                                  client.pooling, z_snapshot);
      lc = (client.anchor == ContrastiveAnchor::PrivateAnchor)
               ? loss_c(tape, x, y, z, client.metric)
               : loss_c(tape, y, x, z, client.metric);
    } else {
      lc = Tensor::scalar(0.0);
    }
  } else {
    // Single-objective methods: cross-entropy of the personalized path only.
    lb = Tensor::scalar(0.0);
    lc = Tensor::scalar(0.0);
  }

  LossWeights weights = client.loss_weights;
  if (client.method != Method::FedMCP) {
    weights.gamma = 0.0;
    weights.mu = 0.0;
  }
  LossBreakdown breakdown = total_loss(tape, la, lb, lc, weights);
  tape.backward(breakdown.total_tensor);
  client.optimizer->step();
  client.optimizer->zero_grad();
  return StepLosses{breakdown.l_a, breakdown.l_b, breakdown.l_c, breakdown.total};
}

}  // namespace

AdapterSet local_update(ClientState& client, const AdapterSet& theta_g_broadcast,
                        std::size_t round) {
  if (client.fail_at_round >= 0 && static_cast<std::size_t>(client.fail_at_round) == round) {
    throw std::runtime_error("injected failure on client " + std::to_string(client.id));
  }
  client.model.theta_g.copy_values_from(theta_g_broadcast);
  const AdapterSet z_snapshot = theta_g_broadcast.clone(/*requires_grad=*/false);

  client.step_history.clear();
  const std::size_t batch_size = client.optimizer ? kEvalBatch : 0;
  (void)batch_size;
  const std::size_t bs = client.optimizer->params().empty()
                             ? 1
                             : std::max<std::size_t>(1, client_batch_size(client));
  for (std::size_t epoch = 0; epoch < client.local_epochs; ++epoch) {
    std::vector<std::size_t> order(client.data.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    client.shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(start + bs, order.size());
      if (end - start < 2) continue;  // similarity terms need n >= 2
      std::vector<std::size_t> indices(order.begin() + static_cast<long>(start),
                                       order.begin() + static_cast<long>(end));
      TokenBatch batch = make_batch(client.data.train, indices);
      std::vector<int> labels = batch_labels(client.data.train, indices);
      StepLosses losses = train_step(client, batch, labels,
                                     client.method == Method::FedMCP ? &z_snapshot : nullptr);
      if (client.step_history.size() < kStepHistoryLimit) client.step_history.push_back(losses);
      if (!std::isfinite(losses.total)) {
        throw NumericalAbortError(client.id, round, client.step_history);
      }
    }
  }
  return client.model.theta_g.clone(/*requires_grad=*/false);
}

namespace {

void append_record(WireTrace& trace, std::size_t round, WireRecord::Direction direction,
                   std::size_t client_id, const AdapterSet& theta_g) {
  NamedTensors named = theta_g_named(theta_g);
  WireRecord record;
  record.round = round;
  record.direction = direction;
  record.client_id = client_id;
  record.tensor_names = named.names();
  record.payload = serialize_payload(named);
  record.byte_count = record.payload.size();
  trace.records.push_back(std::move(record));
}

/// Weighted elementwise mean in delta form around the first client's value:
/// result = x0 + sum_i w_i (x_i - x0). Identical inputs therefore aggregate
/// to themselves bit-exactly, and the reduction order is fixed by client id.
AdapterSet aggregate(const std::vector<AdapterSet>& returned,
                     const std::vector<double>& weights) {
  AdapterSet result = returned[0].clone(/*requires_grad=*/false);
  std::vector<Tensor> out = result.tensors();
  std::vector<std::vector<Tensor>> client_tensors;
  client_tensors.reserve(returned.size());
  for (const auto& set : returned) client_tensors.push_back(set.tensors());
  for (std::size_t t = 0; t < out.size(); ++t) {
    for (std::size_t e = 0; e < out[t].numel(); ++e) {
      const double base = client_tensors[0][t].at(e);
      double acc = 0.0;
      for (std::size_t i = 0; i < returned.size(); ++i) {
        acc += weights[i] * (client_tensors[i][t].at(e) - base);
      }
      if (acc != 0.0) out[t].at(e) = base + acc;
    }
  }
  return result;
}

}  // namespace

void run_round(ServerState& server, std::vector<ClientState>& clients, WireTrace& trace,
               bool parallel_clients) {
  if (server.round < 1) throw std::logic_error("run_round: rounds are 1-based");
  if (clients.empty()) throw std::invalid_argument("run_round: no clients registered");
  const std::size_t round = server.round;

  for (const ClientState& client : clients) {
    append_record(trace, round, WireRecord::Direction::Broadcast, client.id,
                  server.theta_g_avg);
  }

  std::vector<AdapterSet> returned(clients.size());
  if (parallel_clients) {
    std::vector<std::exception_ptr> errors(clients.size());
    std::vector<std::thread> workers;
    workers.reserve(clients.size());
    for (std::size_t i = 0; i < clients.size(); ++i) {
      workers.emplace_back([&, i]() {
        try {
          returned[i] = local_update(clients[i], server.theta_g_avg, round);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);  // abort round, no partial aggregation
    }
    for (std::size_t i = 0; i < clients.size(); ++i) {
      append_record(trace, round, WireRecord::Direction::Upload, clients[i].id, returned[i]);
    }
  } else {
    for (std::size_t i = 0; i < clients.size(); ++i) {
      returned[i] = local_update(clients[i], server.theta_g_avg, round);
      append_record(trace, round, WireRecord::Direction::Upload, clients[i].id, returned[i]);
    }
  }

  std::vector<double> weights(clients.size(), 1.0 / static_cast<double>(clients.size()));
  if (server.weighting == AggregationWeighting::BySampleCount) {
    double total = 0.0;
    for (const auto& c : clients) total += static_cast<double>(c.data.train.size());
    for (std::size_t i = 0; i < clients.size(); ++i) {
      weights[i] = static_cast<double>(clients[i].data.train.size()) / total;
    }
  }
  server.theta_g_avg = aggregate(returned, weights);
  server.round += 1;
}

double evaluate(const ClientState& client, Split split) {
  const std::vector<LabeledSequence>& rows =
      (split == Split::Validation) ? client.data.validation : client.data.test;
  if (rows.empty()) throw std::invalid_argument("evaluate: empty split");
  std::size_t correct = 0;
  for (std::size_t start = 0; start < rows.size(); start += kEvalBatch) {
    const std::size_t end = std::min(start + kEvalBatch, rows.size());
    std::vector<std::size_t> indices(end - start);
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = start + i;
    TokenBatch batch = make_batch(rows, indices);
    Tape tape;
    ForwardResult result = forward_full(tape, client.model, batch, client.pooling);
    const std::size_t c = result.logits.dim(1);
    for (std::size_t i = 0; i < indices.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < c; ++j) {
        if (result.logits.at(i, j) > result.logits.at(i, best)) best = j;
      }
      if (static_cast<int>(best) == rows[indices[i]].label) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

FederationSetup build_federation_state(const RunSettings& settings) {
  if (settings.tasks.size() < 2) {
    throw std::invalid_argument("experiment: need at least 2 client tasks");
  }
  EncoderConfig model_config = settings.model;
  model_config.seed = derive_seed(settings.run_seed, "model", settings.model.seed);
  model_config.validate();
  std::shared_ptr<Backbone> backbone = make_backbone(model_config);

  FederationSetup setup;
  setup.server.round = 1;
  setup.server.weighting = settings.weighting;
  setup.server.theta_g_avg =
      make_adapter_set(model_config, derive_seed(model_config.seed, "theta_g"))
          .clone(/*requires_grad=*/false);

  std::vector<DatasetSplits> datasets =
      build_federation(derive_seed(settings.run_seed, "data"), settings.tasks);

  for (std::size_t i = 0; i < settings.tasks.size(); ++i) {
    ClientState client;
    client.id = i;
    client.method = settings.method;
    client.loss_weights = settings.loss_weights;
    client.metric = settings.metric;
    client.pooling = settings.pooling;
    client.anchor = settings.anchor;
    client.local_epochs = settings.local_epochs;
    client.data = std::move(datasets[i]);
    client.fail_at_round = -1;

    EncoderConfig client_config = model_config;
    client_config.num_classes = settings.tasks[i].num_classes;
    client.model.config = client_config;
    client.model.backbone = backbone;
    client.model.theta_g = setup.server.theta_g_avg.clone(/*requires_grad=*/true);
    if (settings.method != Method::FedAvgPEFT) {
      client.model.theta_p =
          make_adapter_set(client_config, derive_seed(model_config.seed, "theta_p", i));
    }
    client.model.phi_a = make_classifier_head(client_config, client_config.num_classes,
                                              derive_seed(model_config.seed, "phi_a", i));
    if (settings.method == Method::FedMCP) {
      client.model.phi_b = make_classifier_head(client_config, client_config.num_classes,
                                                derive_seed(model_config.seed, "phi_b", i));
    }
    client.optimizer = std::make_unique<AdamOptimizer>(client.model.trainable_tensors(),
                                                       settings.optimizer);
    client.shuffle_rng = Rng(derive_seed(settings.run_seed, "shuffle", i));
    setup.server.client_ids.push_back(i);
    setup.clients.push_back(std::move(client));
  }
  return setup;
}

ExperimentRunResult run_experiment(const RunSettings& settings) {
  FederationSetup setup = build_federation_state(settings);
  ExperimentRunResult result;
  result.param_counts = count_parameters(setup.clients[0].model);

  auto evaluate_all = [&](std::size_t round) {
    for (const ClientState& client : setup.clients) {
      for (Split split : {Split::Validation, Split::Test}) {
        ExperimentRow row;
        row.round = round;
        row.client_id = client.id;
        row.split = split;
        row.accuracy = evaluate(client, split);
        row.losses = client.round_mean_losses();
        row.wire_bytes_down =
            result.trace.bytes_for(round, client.id, WireRecord::Direction::Broadcast);
        row.wire_bytes_up =
            result.trace.bytes_for(round, client.id, WireRecord::Direction::Upload);
        result.rows.push_back(row);
      }
    }
  };

  evaluate_all(0);

  for (std::size_t t = 1; t <= settings.rounds; ++t) {
    if (settings.method == Method::LocalOnly) {
      // No communication: each "round" is just the local epochs.
      for (ClientState& client : setup.clients) {
        const AdapterSet own = client.model.theta_g.clone(false);
        local_update(client, own, t);
      }
    } else {
      run_round(setup.server, setup.clients, result.trace, settings.parallel_clients);
      if (!settings.checkpoint_dir.empty()) {
        std::filesystem::create_directories(settings.checkpoint_dir);
        save_named_tensors(settings.checkpoint_dir + "/round_" + std::to_string(t),
                           theta_g_named(setup.server.theta_g_avg));
      }
    }
    evaluate_all(t);
  }

  for (const ClientState& client : setup.clients) {
    result.final_test_accuracy.push_back(evaluate(client, Split::Test));
  }
  return result;
}

}  // namespace fedmcp
