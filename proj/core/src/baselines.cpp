#include "planpaint/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "planpaint/record_io.hpp"

namespace planpaint {

using json = nlohmann::json;
using MatXf = nn::MatX<float>;
using VecXf = nn::VecX<float>;

BCPolicy::BCPolicy(const BCConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(init_seed, "bc_init"));
  conv1_.init(cfg_.in_channels(), cfg_.conv_channels, 3, 2, rng);
  conv2_.init(cfg_.conv_channels, cfg_.conv_channels, 3, 2, rng);
  const int flat = cfg_.conv_channels * (cfg_.height / 4) * (cfg_.width / 4);
  fc1_.init(flat, cfg_.fc_width, rng);
  fc2_.init(cfg_.fc_width + cfg_.object_vocab_size, kNumActions, rng);
}

MatXf BCPolicy::features(const Observation& obs, int object_vocab_size) {
  const int n = obs.h * obs.w;
  const int token_planes = kNumReservedTokens + object_vocab_size;
  MatXf f = MatXf::Zero(token_planes + 2, n);
  for (int p = 0; p < n; ++p) {
    const int32_t tok = obs.token_map[p];
    PP_CHECK(tok >= 0 && tok < token_planes);
    f(tok, p) = 1.0f;
    f(token_planes, p) = obs.agent_map[p] ? 1.0f : 0.0f;
    f(token_planes + 1, p) = obs.revealed[p] ? 1.0f : 0.0f;
  }
  return f;
}

std::vector<float> BCPolicy::goal_one_hot(int32_t target_id,
                                          int object_vocab_size) {
  const int idx = target_id - kFirstObjectId;
  PP_CHECK_MSG(idx >= 0 && idx < object_vocab_size,
               "target id outside the object vocabulary");
  std::vector<float> g(object_vocab_size, 0.0f);
  g[idx] = 1.0f;
  return g;
}

VecXf BCPolicy::forward(const MatXf& feats, const std::vector<float>& goal) {
  PP_CHECK(static_cast<int>(goal.size()) == cfg_.object_vocab_size);
  MatXf fm = act1_.forward(conv1_.forward(feats, cfg_.height, cfg_.width));
  fm = act2_.forward(conv2_.forward(fm, cfg_.height / 2, cfg_.width / 2));
  fm_rows_ = fm.rows();
  fm_cols_ = fm.cols();
  const MatXf flat = Eigen::Map<const MatXf>(fm.data(), fm.size(), 1);
  const MatXf hidden = act3_.forward(fc1_.forward(flat));
  MatXf cat(hidden.rows() + cfg_.object_vocab_size, 1);
  cat.topRows(hidden.rows()) = hidden;
  for (int i = 0; i < cfg_.object_vocab_size; ++i)
    cat(hidden.rows() + i, 0) = goal[i];
  goal_cache_ = goal;
  return fc2_.forward(cat).col(0);
}

void BCPolicy::backward(const VecXf& dlogits) {
  const MatXf dcat = fc2_.backward(dlogits);
  const MatXf dhidden = dcat.topRows(dcat.rows() - cfg_.object_vocab_size);
  const MatXf dflat = fc1_.backward(act3_.backward(dhidden));
  const MatXf dfm = Eigen::Map<const MatXf>(dflat.data(), fm_rows_, fm_cols_);
  const MatXf d1 = conv2_.backward(act2_.backward(dfm));
  conv1_.backward(act1_.backward(d1));
}

void BCPolicy::zero_grads() {
  visit_params([](const std::string&, MatXf&, MatXf& g) { g.setZero(); });
}

void BCPolicy::visit_params(const nn::ParamVisitor<float>& fn) {
  conv1_.visit("conv1", fn);
  conv2_.visit("conv2", fn);
  fc1_.visit("fc1", fn);
  fc2_.visit("fc2", fn);
}

Action BCPolicy::act(const Observation& obs, int32_t target_id) {
  const VecXf logits = forward(features(obs, cfg_.object_vocab_size),
                               goal_one_hot(target_id,
                                            cfg_.object_vocab_size));
  int best = 0;
  for (int a = 1; a < kNumActions; ++a)
    if (logits[a] > logits[best]) best = a;
  return static_cast<Action>(best);
}

// ---------------------------------------------------------------------------
// Training.

namespace {

struct StepTuple {
  Observation obs;
  int32_t target_id = 0;
  int action = 0;
};

Action action_between(Cell a, Cell b) {
  if (b.r == a.r - 1 && b.c == a.c) return Action::kUp;
  if (b.r == a.r + 1 && b.c == a.c) return Action::kDown;
  if (b.r == a.r && b.c == a.c - 1) return Action::kLeft;
  if (b.r == a.r && b.c == a.c + 1) return Action::kRight;
  throw Error("expert path cells are not 4-adjacent");
}

// Replays the expert path, recording (observation, goal, action) per step.
void collect_tuples(const Episode& ep, std::vector<StepTuple>& out) {
  PP_CHECK_MSG(!ep.is_blocks(), "behavioral cloning covers grid settings");
  EnvState state = ep.state;
  for (size_t i = 0; i + 1 < ep.path_cells.size(); ++i) {
    PP_CHECK(state.agent_pos == ep.path_cells[i]);
    const Action a = action_between(ep.path_cells[i], ep.path_cells[i + 1]);
    out.push_back(StepTuple{observe(state), state.target_id,
                            static_cast<int>(a)});
    if (step_inplace(state, a)) break;
  }
}

struct TinyAdam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t t = 0;
  std::map<std::string, MatXf> m, v;

  void step(BCPolicy& net, double lr) {
    ++t;
    const float b1 = static_cast<float>(beta1);
    const float b2 = static_cast<float>(beta2);
    const float bc1 =
        1.0f - static_cast<float>(std::pow(beta1, static_cast<double>(t)));
    const float bc2 =
        1.0f - static_cast<float>(std::pow(beta2, static_cast<double>(t)));
    const float lrf = static_cast<float>(lr);
    const float epsf = static_cast<float>(eps);
    net.visit_params([&](const std::string& name, MatXf& w, MatXf& g) {
      MatXf& mm = m[name];
      MatXf& vv = v[name];
      if (mm.size() == 0) {
        mm = MatXf::Zero(w.rows(), w.cols());
        vv = MatXf::Zero(w.rows(), w.cols());
      }
      mm = b1 * mm + (1.0f - b1) * g;
      vv = (b2 * vv.array() + (1.0f - b2) * g.array().square()).matrix();
      w.array() -=
          lrf * (mm.array() / bc1) / ((vv.array() / bc2).sqrt() + epsf);
    });
  }
};

VecXf softmax(const VecXf& logits) {
  const float mx = logits.maxCoeff();
  VecXf e = (logits.array() - mx).exp().matrix();
  return e / e.sum();
}

}  // namespace

BCTrainResult BCPolicy::train(const std::vector<Episode>& episodes) {
  PP_CHECK_MSG(!episodes.empty(), "training set is empty");
  std::vector<StepTuple> tuples;
  for (const Episode& ep : episodes) collect_tuples(ep, tuples);
  PP_CHECK_MSG(!tuples.empty(), "no expert steps to clone");

  // Deterministic holdout split.
  std::vector<int> order(tuples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(cfg_.seed, "bc_split"));
  split_rng.shuffle(order);
  const int n_holdout =
      std::min(static_cast<int>(tuples.size()) - 1,
               static_cast<int>(cfg_.holdout_frac * tuples.size()));
  std::vector<int> holdout(order.begin(), order.begin() + n_holdout);
  std::vector<int> train_idx(order.begin() + n_holdout, order.end());

  std::ofstream csv;
  if (!cfg_.out_dir.empty()) {
    std::filesystem::create_directories(cfg_.out_dir);
    csv.open(cfg_.out_dir + "/loss.csv", std::ios::trunc);
    PP_CHECK_MSG(csv.good(), "cannot open loss.csv");
    csv << "epoch,loss,holdout_accuracy\n";
  }

  auto accuracy_on = [&](const std::vector<int>& idxs) -> float {
    if (idxs.empty()) return 0.0f;
    int hit = 0;
    for (const int i : idxs) {
      const StepTuple& s = tuples[i];
      if (static_cast<int>(act(s.obs, s.target_id)) == s.action) ++hit;
    }
    return static_cast<float>(hit) / static_cast<float>(idxs.size());
  };

  TinyAdam adam;
  BCTrainResult result;
  float best_acc = -1.0f;
  std::map<std::string, MatXf> best_params;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    Rng shuffle_rng(
        derive_seed(cfg_.seed, "bc_shuffle", static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(train_idx);
    double loss_sum = 0.0;
    int steps = 0;
    for (size_t b = 0; b < train_idx.size(); b += cfg_.batch_size) {
      const int bsz = static_cast<int>(
          std::min<size_t>(cfg_.batch_size, train_idx.size() - b));
      zero_grads();
      double batch_loss = 0.0;
      for (int i = 0; i < bsz; ++i) {
        const StepTuple& s = tuples[train_idx[b + i]];
        const VecXf logits =
            forward(features(s.obs, cfg_.object_vocab_size),
                    goal_one_hot(s.target_id, cfg_.object_vocab_size));
        const VecXf probs = softmax(logits);
        batch_loss += -std::log(std::max(probs[s.action], 1e-12f));
        VecXf dlogits = probs / static_cast<float>(bsz);
        dlogits[s.action] -= 1.0f / static_cast<float>(bsz);
        backward(dlogits);
      }
      batch_loss /= bsz;
      PP_CHECK_MSG(std::isfinite(batch_loss), "behavioral-cloning loss "
                                              "diverged");
      adam.step(*this, cfg_.lr);
      loss_sum += batch_loss;
      ++steps;
    }
    const float epoch_loss = static_cast<float>(loss_sum / steps);
    const float hold_acc = accuracy_on(holdout);
    if (csv.is_open()) {
      char row[96];
      std::snprintf(row, sizeof(row), "%d,%.8f,%.6f\n", epoch + 1,
                    static_cast<double>(epoch_loss),
                    static_cast<double>(hold_acc));
      csv << row;
      csv.flush();
    }
    if (cfg_.progress_to_stderr)
      std::fprintf(stderr, "[bc] epoch %d/%d loss %.5f holdout %.4f\n",
                   epoch + 1, cfg_.epochs, static_cast<double>(epoch_loss),
                   static_cast<double>(hold_acc));
    result.final_loss = epoch_loss;
    if (hold_acc > best_acc || holdout.empty()) {
      best_acc = hold_acc;
      result.best_epoch = epoch + 1;
      best_params.clear();
      visit_params([&](const std::string& name, MatXf& w, MatXf&) {
        best_params[name] = w;
      });
    }
  }
  if (!best_params.empty())
    visit_params([&](const std::string& name, MatXf& w, MatXf&) {
      w = best_params.at(name);
    });
  result.holdout_accuracy = best_acc < 0.0f ? 0.0f : best_acc;
  result.train_accuracy = accuracy_on(train_idx);
  if (!cfg_.out_dir.empty()) save_checkpoint(cfg_.out_dir + "/checkpoint");
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints (same container as the diffusion module).

namespace {

ArrayData mat_to_array(const std::string& name, const MatXf& m) {
  std::vector<float> values(static_cast<size_t>(m.size()));
  Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic,
                           Eigen::RowMajor>>(values.data(), m.rows(),
                                             m.cols()) = m;
  return ArrayData::make_f32(name, {m.rows(), m.cols()}, std::move(values));
}

MatXf array_to_mat(const ArrayData& a) {
  PP_CHECK_MSG(a.dtype == "f32" && a.shape.size() == 2,
               "checkpoint tensor must be a 2-D f32 array");
  MatXf m(a.shape[0], a.shape[1]);
  m = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic,
                                     Eigen::RowMajor>>(a.f32.data(),
                                                       a.shape[0], a.shape[1]);
  return m;
}

}  // namespace

void BCPolicy::save_checkpoint(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  const json manifest{{"format_version", 1},
                      {"kind", "bc"},
                      {"config",
                       {{"height", cfg_.height},
                        {"width", cfg_.width},
                        {"object_vocab_size", cfg_.object_vocab_size},
                        {"conv_channels", cfg_.conv_channels},
                        {"fc_width", cfg_.fc_width},
                        {"lr", cfg_.lr},
                        {"epochs", cfg_.epochs},
                        {"batch_size", cfg_.batch_size},
                        {"holdout_frac", cfg_.holdout_frac},
                        {"seed", cfg_.seed}}}};
  write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");

  std::vector<Record> records;
  auto& self = const_cast<BCPolicy&>(*this);
  self.visit_params([&](const std::string& name, MatXf& w, MatXf&) {
    Record r;
    r.arrays.push_back(mat_to_array(name, w));
    records.push_back(std::move(r));
  });
  write_records(dir + "/weights.bin", records);
}

BCPolicy BCPolicy::load_checkpoint(const std::string& dir) {
  const json manifest = json::parse(read_text_file(dir + "/manifest.json"));
  PP_CHECK_MSG(manifest.at("format_version").get<int>() == 1,
               "unsupported checkpoint format version");
  PP_CHECK_MSG(manifest.at("kind").get<std::string>() == "bc",
               "checkpoint is not a behavioral-cloning model");
  const json& jc = manifest.at("config");
  BCConfig cfg;
  cfg.height = jc.at("height").get<int>();
  cfg.width = jc.at("width").get<int>();
  cfg.object_vocab_size = jc.at("object_vocab_size").get<int>();
  cfg.conv_channels = jc.at("conv_channels").get<int>();
  cfg.fc_width = jc.at("fc_width").get<int>();
  cfg.lr = jc.at("lr").get<double>();
  cfg.epochs = jc.at("epochs").get<int>();
  cfg.batch_size = jc.at("batch_size").get<int>();
  cfg.holdout_frac = jc.at("holdout_frac").get<double>();
  cfg.seed = jc.at("seed").get<uint64_t>();

  BCPolicy policy(cfg, cfg.seed);
  std::map<std::string, MatXf> by_name;
  for (const Record& r : read_records(dir + "/weights.bin"))
    for (const ArrayData& a : r.arrays) by_name[a.name] = array_to_mat(a);
  policy.visit_params([&](const std::string& name, MatXf& w, MatXf&) {
    const auto it = by_name.find(name);
    PP_CHECK_MSG(it != by_name.end(), "checkpoint missing tensor " + name);
    PP_CHECK_MSG(it->second.rows() == w.rows() &&
                     it->second.cols() == w.cols(),
                 "checkpoint tensor shape mismatch for " + name);
    w = it->second;
  });
  return policy;
}

// ---------------------------------------------------------------------------

EpisodeLog run_bc_episode(BCPolicy& policy, const EnvState& start,
                          int max_env_steps) {
  EnvState state = start;
  EpisodeLog log;
  log.setting = state.config.setting;
  log.seed = state.seed;
  log.visited_cells.push_back(state.agent_pos);
  int env_steps = 0;
  while (!state.terminated && !is_success(state) &&
         env_steps < max_env_steps) {
    const Action a = policy.act(observe(state), state.target_id);
    step_inplace(state, a);
    ++env_steps;
    log.visited_cells.push_back(state.agent_pos);
  }
  log.env_steps = env_steps;
  log.final_pos = state.agent_pos;
  log.success = is_success(state);
  // The executed path doubles as the predicted path for metric purposes.
  std::vector<uint8_t> seen(
      static_cast<size_t>(state.config.height) * state.config.width, 0);
  for (const Cell& c : log.visited_cells) {
    const int p = c.r * state.config.width + c.c;
    if (!seen[p]) {
      seen[p] = 1;
      log.final_plan_cells.push_back(c);
    }
  }
  return log;
}

}  // namespace planpaint
