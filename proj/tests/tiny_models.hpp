#pragma once

// Small trained model set on a 16x16 DoE, shared by the pipeline and
// service tests. Built once per process.

#include <map>
#include <memory>

#include "rrto/pipelines.hpp"

namespace rrto::testing {

using namespace rrto::pipelines;
inline rrae::RraeConfig tiny(rrae::Kind k) {
  rrae::RraeConfig c = rrae::RraeConfig::defaults(k);
  c.latent = 8;
  c.cnn_channels = {4, 8, 8};
  c.cnn_bottleneck = 4;
  c.mlp_width = 16;
  c.mlp_decoder_hidden = 1;
  c.schedule.stages = {{1e-3, 40, 12}};
  c.seed = 3;
  return c;
}

struct Models {
  dataset::DatasetBundle data;
  std::shared_ptr<const RraeModel> geo, sol1d, sol2d;
  std::map<std::pair<Qoi, Direction>, std::shared_ptr<const LatentMap>> maps;
};

inline const Models& models() {
  static const Models m = [] {
    Models out;
    dataset::DoePlan plan;
    plan.n_train = 12;
    plan.n_test = 4;
    plan.f_min = 0.3;
    plan.f_max = 0.7;
    plan.nx = plan.ny = 16;
    topopt::SimpConfig simp;
    simp.max_iters = 1000;
    simp.filter_radius = 1.5;
    out.data = dataset::generate(plan, simp, 1);
    auto train = [&](rrae::Kind k) {
      auto m = std::make_shared<RraeModel>(tiny(k), rrae::training_data(out.data, k, "train").sample_shape());
      m->train(rrae::training_data(out.data, k, "train"));
      m->metadata()["simp"] = simp;
      return std::shared_ptr<const RraeModel>(m);
    };
    out.geo = train(rrae::Kind::geometry);
    out.sol1d = train(rrae::Kind::sol1d);
    out.sol2d = train(rrae::Kind::sol2d);
    for (Qoi q : {Qoi::scalar, Qoi::d1, Qoi::d2}) {
      const RraeModel* sol = q == Qoi::d1 ? out.sol1d.get() : q == Qoi::d2 ? out.sol2d.get() : nullptr;
      const LatentPairs p = latent_pairs(*out.geo, sol, out.data, q, "train");
      latentmap::MapTrainConfig mc;
      mc.epochs = 200;
      mc.batch_size = 12;
      auto d = std::make_shared<LatentMap>(p.alpha.cols(), p.beta.cols());
      d->fit(p.alpha, p.beta, mc);
      auto i = std::make_shared<LatentMap>(p.beta.cols(), p.alpha.cols());
      i->fit(p.beta, p.alpha, mc);
      out.maps[{q, Direction::direct}] = d;
      out.maps[{q, Direction::inverse}] = i;
    }
    return out;
  }();
  return m;
}

inline Pipeline make(Qoi q) {
  const Models& m = models();
  auto sol = q == Qoi::d1 ? m.sol1d : q == Qoi::d2 ? m.sol2d : nullptr;
  return Pipeline(q, m.geo, sol, m.maps.at({q, Direction::direct}), m.maps.at({q, Direction::inverse}),
                  simp_of(*m.geo));
}

inline Tensor geometries(const std::string& split) { return rrae::training_data(models().data, rrae::Kind::geometry, split); }

}  // namespace rrto::testing
