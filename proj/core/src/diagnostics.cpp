#include "vaest/diagnostics.hpp"

#include <stdexcept>
#include <utility>

#include "vaest/fusion.hpp"
#include "vaest/label_space.hpp"
#include "vaest/model.hpp"
#include "vaest/objectives.hpp"
#include "vaest/sequence_model.hpp"

namespace vaest {

namespace {

const std::vector<std::string> kAllModules{"gru",  "tcn",      "attention", "gate", "heads",
                                           "semantic", "ccc", "kl",        "objective"};

TensorPtr random_input(Rng& rng, std::size_t rows, std::size_t cols) {
  return Tensor::create({rows, cols}, rng.uniform_vec(rows * cols, -1.0, 1.0), true);
}

TensorPtr random_const(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
  return Tensor::create({rows, cols}, rng.uniform_vec(rows * cols, lo, hi));
}

void collect_gru(const GruParams& p, std::vector<TensorPtr>& out) {
  for (const auto* d : {&p.fwd, &p.bwd}) {
    out.insert(out.end(),
               {d->w_z, d->w_r, d->w_n, d->u_z, d->u_r, d->u_n, d->b_z, d->b_r, d->b_n});
  }
}

void collect_tcn(const TcnParams& p, std::vector<TensorPtr>& out) {
  for (const auto& b : p.blocks) {
    out.insert(out.end(), {b.w1, b.b1, b.w2, b.b2});
    if (b.res_w) out.push_back(b.res_w);
  }
}

struct CheckSetup {
  LossFn loss;
  std::vector<TensorPtr> params;
};

CheckSetup build_check(const std::string& module, Rng& rng, std::size_t seed_index) {
  if (module == "gru") {
    auto p = GruParams::init(rng, 6, 4);
    auto x = random_input(rng, 4, 6);
    std::vector<TensorPtr> params{x};
    collect_gru(p, params);
    return {[p, x](Graph& g, const std::vector<TensorPtr>&) {
              return g.mean(g.square(bigru_forward(g, x, p)));
            },
            std::move(params)};
  }
  if (module == "tcn") {
    auto p = TcnParams::init(rng, 4, 2, {1, 2});
    auto x = random_input(rng, 5, 4);
    std::vector<TensorPtr> params{x};
    collect_tcn(p, params);
    return {[p, x](Graph& g, const std::vector<TensorPtr>&) {
              return g.mean(g.square(tcn_forward(g, x, p)));
            },
            std::move(params)};
  }
  if (module == "attention") {
    auto p = AttentionParams::init(rng, 4, 2);
    auto h_v = random_input(rng, 3, 4);
    auto h_a = random_input(rng, 2, 4);
    std::vector<TensorPtr> params{h_v, h_a, p.w_q, p.b_q, p.w_k, p.b_k, p.w_v, p.b_v};
    return {[p, h_v, h_a](Graph& g, const std::vector<TensorPtr>&) {
              return g.mean(g.square(cross_modal_attention(g, h_v, h_a, p)));
            },
            std::move(params)};
  }
  if (module == "gate") {
    auto p = GateParams::init(rng, 4);
    auto f = random_input(rng, 3, 4);
    auto h = random_input(rng, 3, 4);
    std::vector<TensorPtr> params{f, h, p.w, p.b};
    return {[p, f, h](Graph& g, const std::vector<TensorPtr>&) {
              return g.mean(g.square(gated_fusion(g, f, h, p)));
            },
            std::move(params)};
  }
  if (module == "heads") {
    auto p = HeadParams::init(rng, 6, 3);
    auto x = random_input(rng, 4, 6);
    std::vector<TensorPtr> params{x, p.w1, p.b1, p.w2, p.b2};
    return {[p, x](Graph& g, const std::vector<TensorPtr>&) {
              return g.mean(g.square(regress_va(g, x, p)));
            },
            std::move(params)};
  }
  if (module == "semantic") {
    // Alternate head modes so both the linear map and the prototype path with
    // its learned projection and temperature are covered.
    const bool prototype = seed_index % 2 == 1;
    std::optional<PrototypeMatrix> protos;
    if (prototype) protos = make_prototypes(4, rng.uniform_vec(36, -1.0, 1.0));
    auto head = SemanticHead::init(rng, 6, prototype ? SemanticMode::prototype
                                                     : SemanticMode::linear,
                                   std::move(protos));
    auto x = random_input(rng, 4, 6);
    std::vector<TensorPtr> params{x};
    if (prototype) {
      params.insert(params.end(), {head.proj_w, head.proj_b, head.tau});
    } else {
      params.insert(params.end(), {head.w, head.b});
    }
    return {[head, x](Graph& g, const std::vector<TensorPtr>&) {
              return g.mean(g.square(semantic_distribution(g, x, head)));
            },
            std::move(params)};
  }
  if (module == "ccc") {
    auto pred = random_input(rng, 5, 2);
    auto target = random_const(rng, 5, 2, -1.0, 1.0);
    return {[pred, target](Graph& g, const std::vector<TensorPtr>&) {
              return ccc_loss(g, pred, target);
            },
            {pred}};
  }
  if (module == "kl") {
    auto logits = random_input(rng, 4, 9);
    std::vector<double> t(4 * 9);
    for (std::size_t r = 0; r < 4; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < 9; ++c) {
        t[r * 9 + c] = rng.uniform(0.05, 1.0);
        sum += t[r * 9 + c];
      }
      for (std::size_t c = 0; c < 9; ++c) t[r * 9 + c] /= sum;
    }
    auto targets = Tensor::create({4, 9}, std::move(t));
    return {[logits, targets](Graph& g, const std::vector<TensorPtr>&) {
              return kl_loss(g, targets, g.softmax(logits));
            },
            {logits}};
  }
  if (module == "objective") {
    ModelConfig cfg;
    cfg.visual_dim = 5;
    cfg.audio_dim = 6;
    cfg.hidden = 4;
    cfg.heads = 2;
    cfg.temporal = seed_index % 2 == 0 ? TemporalType::gru : TemporalType::tcn;
    auto model = Model::init(rng, cfg);
    auto visual = random_input(rng, 4, 5);
    auto audio = random_input(rng, 3, 6);
    GridConfig grid;
    std::vector<double> va, dist;
    for (std::size_t i = 0; i < 4; ++i) {
      const VAPoint y{rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)};
      va.insert(va.end(), {y.valence, y.arousal});
      const auto soft = soft_label(y, grid);
      dist.insert(dist.end(), soft.weights.begin(), soft.weights.end());
    }
    auto target_va = Tensor::create({4, 2}, std::move(va));
    auto target_dist = Tensor::create({4, 9}, std::move(dist));
    std::vector<TensorPtr> params{visual, audio};
    for (const auto& [name, tensor] : model.named_parameters()) params.push_back(tensor);
    return {[model, visual, audio, target_va, target_dist](Graph& g,
                                                           const std::vector<TensorPtr>&) {
              auto out = model.forward(g, visual, audio);
              return total_loss(g, out.va, target_va, out.dist, target_dist, 0.2).total_node;
            },
            std::move(params)};
  }
  throw std::invalid_argument("unknown gradient-check module '" + module +
                              "' (expected all|loss|gru|tcn|attention|gate|heads|semantic|ccc|"
                              "kl|objective)");
}

}  // namespace

std::vector<std::string> expand_gradient_modules(const std::string& selector) {
  if (selector == "all") return kAllModules;
  if (selector == "loss") return {"ccc", "kl", "objective"};
  for (const auto& m : kAllModules) {
    if (m == selector) return {selector};
  }
  throw std::invalid_argument("unknown gradient-check module '" + selector +
                              "' (expected all|loss|gru|tcn|attention|gate|heads|semantic|ccc|"
                              "kl|objective)");
}

ModuleCheckReport check_module_gradients(const std::string& module, std::size_t seeds,
                                         double tol) {
  if (seeds == 0) throw std::invalid_argument("check_module_gradients: seeds must be positive");
  ModuleCheckReport report;
  report.module = module;
  report.seeds = seeds;
  for (std::size_t s = 0; s < seeds; ++s) {
    Rng seed_rng(0xd1a60000ull + s * 7919ull + module.size() * 131ull +
                 static_cast<unsigned char>(module.front()));
    auto setup = build_check(module, seed_rng, s);
    const auto result = gradient_check(setup.loss, setup.params, 1e-5, tol);
    report.checked += result.checked;
    report.flagged += result.flagged;
    if (result.max_rel_err > report.max_rel_err) {
      report.max_rel_err = result.max_rel_err;
      report.worst = result;
    }
  }
  return report;
}

std::vector<ModuleCheckReport> run_gradient_suite(const std::vector<std::string>& modules,
                                                  std::size_t seeds, double tol) {
  std::vector<ModuleCheckReport> out;
  for (const auto& m : modules) out.push_back(check_module_gradients(m, seeds, tol));
  return out;
}

}  // namespace vaest
