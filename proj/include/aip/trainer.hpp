#pragma once

#include "aip/adversarial.hpp"
#include "aip/config.hpp"
#include "aip/data.hpp"
#include "aip/importance.hpp"
#include "aip/metrics.hpp"
#include "aip/model_zoo.hpp"
#include "aip/network.hpp"
#include "aip/optim.hpp"
#include "aip/surgery.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace aip {

struct TrainingData {
  Splits splits;
  Normalization norm;
};

/// Synthetic data is generated from cfg.seed; CIFAR is read from data_dir.
TrainingData load_data(const RunConfig& cfg);
ScaleConfig scale_for(const RunConfig& cfg, const Dataset& data);

struct StepLosses {
  double at = 0.0;
  double kd = 0.0;  // distillation term; plain cross-entropy when kd is off
  double adv = 0.0;
  double disc = 0.0;  // discriminator objective of the preceding update
  double total = 0.0;  // at + kd + adv
};

/// Appends `phase,epoch,step,at,kd,adv,total,accuracy` rows.
class TrainLog {
 public:
  explicit TrainLog(const std::filesystem::path& path);
  void record(const std::string& phase, int epoch, int step, const StepLosses& losses, double accuracy);

 private:
  std::ofstream out_;
};

struct EpochSummary {
  int epoch = 0;
  double lr = 0.0;
  StepLosses mean;
  double train_accuracy = 0.0;
};

struct LossWeights {
  double alpha = 0.3;
  double t_emp = 4.0;
  LossComponents components;
};

/// One discriminator update on detached logits (columns are samples).
/// Only discriminator gradients are touched; they are cleared again after
/// the optimizer step. Returns the discriminator objective.
double discriminator_step(Discriminator<float>& disc, Sgd<float>& opt, const Matrix<float>& teacher_logits,
                          const Matrix<float>& student_logits, double lr);

/// One student update with at + kd + adv. Both networks must already have
/// run forward on the same batch. The discriminator only supplies input
/// gradients; its parameter gradients stay untouched.
StepLosses student_step(Network<float>& student, const Network<float>& teacher, Discriminator<float>* disc,
                        Sgd<float>& opt, std::span<const int> labels, const LossWeights& weights, double lr);

/// Forward both networks, update the discriminator, then the student.
StepLosses alternate_step(Network<float>& student, Network<float>& teacher, Discriminator<float>* disc,
                          Sgd<float>& student_opt, Sgd<float>& disc_opt, const FeatureMap<float>& images,
                          std::span<const int> labels, const LossWeights& weights, double lr);

/// Cross-entropy training from scratch with the step-decay schedule.
Network<float> pretrain_teacher(const RunConfig& cfg, const TrainingData& data, TrainLog* log = nullptr,
                                std::vector<EpochSummary>* history = nullptr);

struct PruneEvent {
  int epoch = 0;
  KeepMask mask;
  PrunePlan plan;
  std::map<int, Scores> scores;
  NetworkDescriptor before;
  NetworkDescriptor after;
  std::uint64_t params_before = 0;
  std::uint64_t params_after = 0;
  FlopCount flops_before;
  FlopCount flops_after;
};

struct PruneHooks {
  /// The importance window of `epoch` has closed; called before any pruning.
  std::function<void(int epoch, const ImportanceState&)> on_window_closed;
  /// After surgery; `state` is the importance state following its reset.
  std::function<void(const PruneEvent&, const Network<float>& student, const ImportanceState& state)> on_event;
  /// End of every epoch, after pruning if one fired.
  std::function<void(int epoch, const Network<float>& student, const Discriminator<float>&)> on_epoch_end;
};

struct PruneResult {
  Network<float> student;
  Discriminator<float> discriminator;
  std::vector<PruneEvent> events;
  std::vector<EpochSummary> history;
};

/// Adversarial iterative pruning. The student starts as a copy of the
/// teacher; epochs run 1..N, and whenever epoch % s_p == 0 the importance
/// scores gathered during that epoch drive a pruning step. Training resumes
/// on the pruned student with its surviving weights. The teacher is never
/// modified.
PruneResult iterative_prune(const Network<float>& teacher, const RunConfig& cfg, const TrainingData& data,
                            const PruneHooks& hooks = {}, TrainLog* log = nullptr);

/// round(baseline * flops_teacher / flops_pruned), capped at cap * baseline.
int retrain_epochs(int baseline_epochs, std::uint64_t flops_teacher, std::uint64_t flops_pruned, double cap);

/// Fresh initialisation of `pruned`, trained under `components` with a
/// cosine-annealed learning rate. `epochs` overrides the FLOPs-scaled budget.
Network<float> retrain_from_scratch(const NetworkDescriptor& pruned, const Network<float>& teacher,
                                    const RunConfig& cfg, const TrainingData& data, LossComponents components,
                                    TrainLog* log = nullptr, std::optional<int> epochs = std::nullopt,
                                    std::vector<EpochSummary>* history = nullptr);

/// Top-1 accuracy in eval mode.
double evaluate(Network<float>& net, const Dataset& split, const Normalization& norm, int batch_size = 256);

}  // namespace aip
