#include "aip/trainer.hpp"

#include "aip/distill.hpp"
#include "aip/errors.hpp"

#include <cmath>
#include <cstdio>

namespace aip {

namespace {

constexpr std::uint64_t kTeacherLoaderSalt = 1;
constexpr std::uint64_t kPruneLoaderSalt = 2;
constexpr std::uint64_t kRetrainLoaderSalt = 3;
constexpr std::uint64_t kDiscriminatorSalt = 4;
constexpr std::uint64_t kRetrainInitSalt = 5;

int correct_predictions(const Matrix<float>& logits, std::span<const int> labels) {
  int correct = 0;
  for (Eigen::Index n = 0; n < logits.cols(); ++n) {
    Eigen::Index best = 0;
    logits.col(n).maxCoeff(&best);
    if (best == labels[n]) ++correct;
  }
  return correct;
}

void require_finite(double value, const std::string& phase, int epoch, int step) {
  if (!std::isfinite(value))
    throw DivergenceError(phase + ": non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                          std::to_string(step));
}

struct EpochMeter {
  StepLosses sum;
  int steps = 0;
  long correct = 0;
  long seen = 0;

  void add(const StepLosses& l, int batch_correct, int batch_size) {
    sum.at += l.at;
    sum.kd += l.kd;
    sum.adv += l.adv;
    sum.disc += l.disc;
    sum.total += l.total;
    ++steps;
    correct += batch_correct;
    seen += batch_size;
  }

  EpochSummary summary(int epoch, double lr) const {
    EpochSummary s;
    s.epoch = epoch;
    s.lr = lr;
    if (steps > 0) {
      s.mean.at = sum.at / steps;
      s.mean.kd = sum.kd / steps;
      s.mean.adv = sum.adv / steps;
      s.mean.disc = sum.disc / steps;
      s.mean.total = sum.total / steps;
    }
    s.train_accuracy = seen > 0 ? static_cast<double>(correct) / seen : 0.0;
    return s;
  }
};

void finish_epoch(const EpochMeter& meter, const std::string& phase, int epoch, double lr, TrainLog* log,
                  std::vector<EpochSummary>* history) {
  const EpochSummary s = meter.summary(epoch, lr);
  if (log) log->record(phase, epoch, meter.steps, s.mean, s.train_accuracy);
  if (history) history->push_back(s);
}

}  // namespace

TrainingData load_data(const RunConfig& cfg) {
  TrainingData out;
  if (cfg.dataset == "synthetic") {
    SyntheticSpec spec;
    spec.num_classes = cfg.num_classes;
    spec.shape = {3, cfg.image_size, cfg.image_size};
    spec.train_samples = cfg.train_samples;
    spec.test_samples = cfg.test_samples;
    spec.noise = cfg.noise;
    out.splits = make_synthetic(spec, cfg.seed);
  } else {
    out.splits = load_cifar(cfg.data_dir, cfg.num_classes);
  }
  out.norm = channel_stats(out.splits.train);
  return out;
}

ScaleConfig scale_for(const RunConfig& cfg, const Dataset& data) {
  ScaleConfig scale;
  scale.input = data.shape;
  scale.num_classes = cfg.num_classes;
  scale.width = cfg.width;
  scale.depth = cfg.depth;
  return scale;
}

TrainLog::TrainLog(const std::filesystem::path& path) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::app);
  if (!out_) throw std::runtime_error("cannot open log " + path.string());
  if (fresh) out_ << "phase,epoch,step,at,kd,adv,total,accuracy\n";
}

void TrainLog::record(const std::string& phase, int epoch, int step, const StepLosses& l, double accuracy) {
  char line[256];
  std::snprintf(line, sizeof line, "%s,%d,%d,%.6g,%.6g,%.6g,%.6g,%.6g\n", phase.c_str(), epoch, step, l.at, l.kd,
                l.adv, l.total, accuracy);
  out_ << line;
  out_.flush();
}

double discriminator_step(Discriminator<float>& disc, Sgd<float>& opt, const Matrix<float>& teacher_logits,
                          const Matrix<float>& student_logits, double lr) {
  disc.zero_grad();
  const Vector<float> d_teacher = disc.forward(teacher_logits);
  disc.backward(discriminator_grad_teacher(d_teacher), true);
  const Vector<float> d_student = disc.forward(student_logits);
  disc.backward(discriminator_grad_student(d_student), true);
  const double loss = discriminator_loss(d_teacher, d_student);
  opt.step(parameter_slots(disc), lr);
  disc.zero_grad();
  return loss;
}

StepLosses student_step(Network<float>& student, const Network<float>& teacher, Discriminator<float>* disc,
                        Sgd<float>& opt, std::span<const int> labels, const LossWeights& weights, double lr) {
  StepLosses out;
  const NetworkDescriptor& desc = student.descriptor();
  std::map<int, Matrix<float>> extra;
  if (weights.components.at) {
    std::vector<const FeatureMap<float>*> s_taps, t_taps;
    for (int tap : desc.attention_taps) {
      s_taps.push_back(&student.output(tap));
      t_taps.push_back(&teacher.output(tap));
    }
    AttentionLoss<float> at = at_loss(s_taps, t_taps);
    out.at = at.value;
    for (std::size_t i = 0; i < at.grads.size(); ++i) extra[desc.attention_taps[i]] = std::move(at.grads[i]);
  }

  const double alpha = weights.components.kd ? weights.alpha : 0.0;
  DistillLoss<float> kd =
      kd_loss(student.logits(), teacher.logits(), labels, static_cast<float>(weights.t_emp), static_cast<float>(alpha));
  out.kd = kd.value;
  Matrix<float> dlogits = std::move(kd.grad);

  if (weights.components.adv && disc) {
    const Vector<float> d = disc->forward(student.logits());
    out.adv = student_adv_loss(d);
    dlogits += disc->backward(student_adv_grad(d), false);
  }

  out.total = out.at + out.kd + out.adv;
  if (!std::isfinite(out.total)) return out;
  student.zero_grad();
  student.backward(dlogits, extra);
  opt.step(parameter_slots(student), lr);
  return out;
}

StepLosses alternate_step(Network<float>& student, Network<float>& teacher, Discriminator<float>* disc,
                          Sgd<float>& student_opt, Sgd<float>& disc_opt, const FeatureMap<float>& images,
                          std::span<const int> labels, const LossWeights& weights, double lr) {
  teacher.forward(images, Mode::Eval);
  student.forward(images, Mode::Train);
  double disc_loss = 0.0;
  if (weights.components.adv && disc)
    disc_loss = discriminator_step(*disc, disc_opt, teacher.logits(), student.logits(), lr);
  StepLosses out = student_step(student, teacher, disc, student_opt, labels, weights, lr);
  out.disc = disc_loss;
  return out;
}

Network<float> pretrain_teacher(const RunConfig& cfg, const TrainingData& data, TrainLog* log,
                                std::vector<EpochSummary>* history) {
  validate(cfg);
  Network<float> net = build<float>(parse_arch(cfg.arch), scale_for(cfg, data.splits.train), cfg.seed);
  Sgd<float> opt(cfg.momentum, cfg.weight_decay);
  BatchLoader loader(data.splits.train, data.norm, cfg.batch_size, true, cfg.augment, cfg.seed + kTeacherLoaderSalt);
  FeatureMap<float> images;
  std::vector<int> labels;
  for (int epoch = 0; epoch < cfg.baseline_epochs; ++epoch) {
    const double lr = step_decay_lr(cfg.lr, epoch, cfg.baseline_epochs);
    loader.start_epoch(epoch);
    EpochMeter meter;
    while (loader.next(images, labels)) {
      const Matrix<float>& logits = net.forward(images, Mode::Train);
      const float inv_batch = 1.0f / static_cast<float>(labels.size());
      Matrix<float> dlogits(logits.rows(), logits.cols());
      StepLosses l;
      for (Eigen::Index n = 0; n < logits.cols(); ++n) {
        const Vector<float> z = logits.col(n);
        const Vector<float> log_p = log_soften(z, 1.0f);
        l.kd -= log_p[labels[n]];
        dlogits.col(n) = log_p.array().exp().matrix();
        dlogits(labels[n], n) -= 1.0f;
      }
      dlogits *= inv_batch;
      l.kd /= static_cast<double>(labels.size());
      l.total = l.kd;
      require_finite(l.total, "pretrain", epoch + 1, meter.steps);
      meter.add(l, correct_predictions(logits, labels), static_cast<int>(labels.size()));
      net.zero_grad();
      net.backward(dlogits);
      opt.step(parameter_slots(net), lr);
    }
    finish_epoch(meter, "pretrain", epoch + 1, lr, log, history);
  }
  return net;
}

PruneResult iterative_prune(const Network<float>& teacher_in, const RunConfig& cfg, const TrainingData& data,
                            const PruneHooks& hooks, TrainLog* log) {
  validate(cfg);
  // forward() writes activation caches, so the teacher runs as a private copy.
  Network<float> teacher = clone_as_student(teacher_in);
  PruneResult result{clone_as_student(teacher_in),
                     Discriminator<float>(teacher_in.descriptor().num_classes, cfg.seed + kDiscriminatorSalt, true),
                     {},
                     {}};
  Network<float>& student = result.student;
  Sgd<float> student_opt(cfg.momentum, cfg.weight_decay);
  Sgd<float> disc_opt(cfg.momentum, cfg.weight_decay);
  const LossWeights weights{cfg.alpha, cfg.t_emp, prune_losses(cfg)};
  BatchLoader loader(data.splits.train, data.norm, cfg.batch_size, true, cfg.augment, cfg.seed + kPruneLoaderSalt);

  ImportanceState state;
  FeatureMap<float> images;
  std::vector<int> labels;
  for (int epoch = 1; epoch <= cfg.N; ++epoch) {
    state.reset();
    loader.start_epoch(epoch);
    EpochMeter meter;
    std::vector<std::pair<int, int>> sources;
    for (int layer : student.descriptor().prunable)
      sources.emplace_back(layer, importance_source(student.descriptor(), layer));
    while (loader.next(images, labels)) {
      const StepLosses l = alternate_step(student, teacher, &result.discriminator, student_opt, disc_opt, images,
                                          labels, weights, cfg.prune_lr);
      require_finite(l.total, "prune", epoch, meter.steps);
      // Scores come from the maps of the forward pass that drove this update.
      for (const auto& [layer, source] : sources) accumulate(state, layer, student.output(source));
      meter.add(l, correct_predictions(student.logits(), labels), static_cast<int>(labels.size()));
    }
    finish_epoch(meter, "prune", epoch, cfg.prune_lr, log, &result.history);
    if (hooks.on_window_closed) hooks.on_window_closed(epoch, state);

    if (epoch % cfg.s_p == 0) {
      PruneEvent event;
      event.epoch = epoch;
      event.before = student.descriptor();
      event.mask = select_all(state, cfg.k, &event.scores);
      event.plan = plan(event.before, event.mask);
      student = apply(student, event.plan);
      event.after = student.descriptor();
      event.params_before = count_params(event.before);
      event.params_after = count_params(event.after);
      event.flops_before = count_flops(event.before);
      event.flops_after = count_flops(event.after);
      student_opt.reset();
      state.reset();
      result.events.push_back(std::move(event));
      if (hooks.on_event) hooks.on_event(result.events.back(), student, state);
    }
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, student, result.discriminator);
  }
  return result;
}

int retrain_epochs(int baseline_epochs, std::uint64_t flops_teacher, std::uint64_t flops_pruned, double cap) {
  if (flops_pruned == 0) throw std::invalid_argument("pruned network has no FLOPs");
  const double scaled = std::round(static_cast<double>(baseline_epochs) * static_cast<double>(flops_teacher) /
                                   static_cast<double>(flops_pruned));
  const double ceiling = std::floor(cap * baseline_epochs);
  return static_cast<int>(std::max(1.0, std::min(scaled, ceiling)));
}

Network<float> retrain_from_scratch(const NetworkDescriptor& pruned, const Network<float>& teacher_in,
                                    const RunConfig& cfg, const TrainingData& data, LossComponents components,
                                    TrainLog* log, std::optional<int> epochs, std::vector<EpochSummary>* history) {
  validate(cfg);
  if (auto issue = validate(pruned, pruned.input))
    throw ShapeMismatch("pruned descriptor invalid at layer " + std::to_string(issue->layer) + ": " + issue->message);
  const int total = epochs.value_or(retrain_epochs(cfg.baseline_epochs, count_flops(teacher_in.descriptor()).macs,
                                                   count_flops(pruned).macs, cfg.retrain_cap));
  Network<float> teacher = clone_as_student(teacher_in);
  Network<float> net(pruned, cfg.seed + kRetrainInitSalt);
  std::optional<Discriminator<float>> disc;
  if (components.adv) disc.emplace(pruned.num_classes, cfg.seed + kDiscriminatorSalt, true);
  Sgd<float> opt(cfg.momentum, cfg.weight_decay);
  Sgd<float> disc_opt(cfg.momentum, cfg.weight_decay);
  const LossWeights weights{cfg.alpha, cfg.t_emp, components};
  BatchLoader loader(data.splits.train, data.norm, cfg.batch_size, true, cfg.augment, cfg.seed + kRetrainLoaderSalt);
  FeatureMap<float> images;
  std::vector<int> labels;
  for (int epoch = 0; epoch < total; ++epoch) {
    const double lr = cosine_lr(cfg.lr, epoch, total);
    loader.start_epoch(epoch);
    EpochMeter meter;
    while (loader.next(images, labels)) {
      const StepLosses l =
          alternate_step(net, teacher, disc ? &*disc : nullptr, opt, disc_opt, images, labels, weights, lr);
      require_finite(l.total, "retrain", epoch + 1, meter.steps);
      meter.add(l, correct_predictions(net.logits(), labels), static_cast<int>(labels.size()));
    }
    finish_epoch(meter, "retrain", epoch + 1, lr, log, history);
  }
  return net;
}

double evaluate(Network<float>& net, const Dataset& split, const Normalization& norm, int batch_size) {
  if (split.size() == 0) throw std::invalid_argument("evaluation split is empty");
  BatchLoader loader(split, norm, batch_size, false, false, 0);
  loader.start_epoch(0);
  FeatureMap<float> images;
  std::vector<int> labels;
  long correct = 0;
  while (loader.next(images, labels)) correct += correct_predictions(net.forward(images, Mode::Eval), labels);
  return static_cast<double>(correct) / split.size();
}

}  // namespace aip
