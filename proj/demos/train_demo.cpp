// Train a small RNN on a deterministic cyclic model until it tracks the
// belief over the whole horizon.
#include "hmmlab/train/trainer.hpp"

#include <cstdio>

int main() {
  using namespace hmmlab;
  ModelSpec spec;
  spec.kind = ModelKind::cyclic_det;
  spec.n = 3;
  spec.m = 3;
  spec.seed = 0;
  const int T = 12;
  const train::Dataset data = train::make_dataset(make_model(spec), T, 2000, 5);

  train::TrainConfig cfg;
  cfg.net.kind = train::NetKind::rnn;
  cfg.net.rnn_hidden = 32;
  cfg.plan = train::flat_plan(T, 8);
  cfg.batch = 32;
  cfg.schedule.warmup_steps = 200;
  cfg.eval_E = 64;
  cfg.probe_steps = train::default_probes(T);
  cfg.stop_eps = 0.05;

  const auto res = train::train_network(data, cfg, [](const train::EpochMetrics& e) {
    std::printf("epoch %d: loss %.4f, fit(0.05) = %d\n", e.epoch, e.train_loss, e.evaluated ? e.report.fit_lengths.at(0.05) : -1);
  });
  std::printf("best 0.05-fit length %d of %d\n", res.best_fit(0.05), T);
}
