#pragma once

// Conditional U-Net noise predictor: encoder/decoder conv trunk with skip
// connections, timestep-embedding biases in every residual block, spatial
// self-attention plus instruction cross-attention at configured levels, and
// an embedding lift that turns the raw observation into conditioning
// channels. Templated on the scalar type (float in production, double in the
// finite-difference gradient check).

#include <cstdint>
#include <string>
#include <vector>

#include "planpaint/language.hpp"
#include "planpaint/nn.hpp"

namespace planpaint {

enum class ObsMode {
  kTokens,  // token map -> embedding table lift, plus agent/revealed planes
  kRawId,   // ablation: single normalized-id plane, plus agent/revealed
  kScalar,  // blocks: a single scalar feature plane
};

const char* to_string(ObsMode m);
ObsMode obs_mode_from_string(const std::string& s);

struct DenoiserConfig {
  int height = 16;
  int width = 16;
  int horizon = 32;          // T trajectory channels
  bool goal_channel = true;  // ablation no_goal_channel drops g
  ObsMode obs_mode = ObsMode::kTokens;
  int object_vocab = kNumReservedTokens + 8;  // bound on grid token ids
  int embed_dim = 16;
  int text_vocab = 0;  // set from the tokenizer vocabulary
  int text_embed_dim = 64;
  int text_len = 16;
  int depth = 3;
  std::vector<int> base_channels = {32, 64, 128};
  std::vector<int> attention_levels = {1, 2};  // two deepest by default
  int timestep_embed_dim = 128;
  int norm_groups = 8;
  int head_dim = 32;

  int plan_channels() const { return horizon + (goal_channel ? 1 : 0); }
  int obs_channels() const {
    switch (obs_mode) {
      case ObsMode::kTokens: return embed_dim + 2;
      case ObsMode::kRawId: return 3;
      case ObsMode::kScalar: return 1;
    }
    return 0;
  }
  int in_channels() const { return obs_channels() + plan_channels(); }
  bool has_attention(int level) const {
    for (int l : attention_levels)
      if (l == level) return true;
    return false;
  }
  void validate() const {
    PP_CHECK_MSG(depth >= 2, "denoiser depth must be >= 2");
    PP_CHECK_MSG(static_cast<int>(base_channels.size()) == depth,
                 "base_channels must list one width per level");
    const int factor = 1 << (depth - 1);
    PP_CHECK_MSG(height % factor == 0 && width % factor == 0,
                 "H and W must be divisible by 2^(depth-1)");
    PP_CHECK(horizon >= 1 && embed_dim >= 1 && text_embed_dim >= 1);
    PP_CHECK(text_vocab >= 2 && text_len >= 1 && object_vocab >= 1);
    PP_CHECK(timestep_embed_dim >= 4 && timestep_embed_dim % 2 == 0);
    PP_CHECK(norm_groups >= 1 && head_dim >= 1);
    for (int l : attention_levels) PP_CHECK(l >= 0 && l < depth);
  }
};

// Raw observation planes, each of length height*width (row-major). Which
// fields are used depends on obs_mode.
struct ObsInput {
  std::vector<int32_t> tokens;
  std::vector<float> agent;
  std::vector<float> revealed;
  std::vector<float> scalar;
};

template <typename S>
class Denoiser {
 public:
  using Mat = nn::MatX<S>;
  using Vec = nn::VecX<S>;

  Denoiser(const DenoiserConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(init_seed, "denoiser_init"));
    const int D = cfg_.depth;
    if (cfg_.obs_mode == ObsMode::kTokens)
      obj_embed_.init(cfg_.object_vocab, cfg_.embed_dim, rng);
    text_embed_.init(cfg_.text_vocab, cfg_.text_embed_dim, rng);
    text_pos_ = nn::random_normal<S>(cfg_.text_embed_dim, cfg_.text_len, 1.0,
                                     rng);
    gtext_pos_ = Mat::Zero(cfg_.text_embed_dim, cfg_.text_len);
    temb_lin1_.init(cfg_.timestep_embed_dim, cfg_.timestep_embed_dim, rng);
    temb_lin2_.init(cfg_.timestep_embed_dim, cfg_.timestep_embed_dim, rng);

    stem_.init(cfg_.in_channels(), cfg_.base_channels[0], 3, 1, rng);
    enc_.resize(D);
    for (int l = 0; l < D; ++l) {
      const int ch = cfg_.base_channels[l];
      enc_[l].attn = cfg_.has_attention(l);
      enc_[l].res.init(ch, ch, cfg_.timestep_embed_dim, cfg_.norm_groups, rng);
      if (enc_[l].attn) {
        enc_[l].self_attn.init(ch, cfg_.norm_groups, cfg_.head_dim, rng);
        enc_[l].cross_attn.init(ch, cfg_.text_embed_dim, cfg_.norm_groups,
                                cfg_.head_dim, rng);
      }
    }
    down_.resize(D - 1);
    for (int l = 0; l + 1 < D; ++l)
      down_[l].init(cfg_.base_channels[l], cfg_.base_channels[l + 1], 3, 2,
                    rng);

    const int mid_ch = cfg_.base_channels[D - 1];
    mid1_.init(mid_ch, mid_ch, cfg_.timestep_embed_dim, cfg_.norm_groups, rng);
    mid_self_.init(mid_ch, cfg_.norm_groups, cfg_.head_dim, rng);
    mid_cross_.init(mid_ch, cfg_.text_embed_dim, cfg_.norm_groups,
                    cfg_.head_dim, rng);
    mid2_.init(mid_ch, mid_ch, cfg_.timestep_embed_dim, cfg_.norm_groups, rng);

    up_.resize(D - 1);
    dec_.resize(D - 1);
    for (int l = D - 2; l >= 0; --l) {
      const int ch = cfg_.base_channels[l];
      up_[l].init(cfg_.base_channels[l + 1], ch, rng);
      dec_[l].attn = cfg_.has_attention(l);
      dec_[l].res.init(2 * ch, ch, cfg_.timestep_embed_dim, cfg_.norm_groups,
                       rng);
      if (dec_[l].attn) {
        dec_[l].self_attn.init(ch, cfg_.norm_groups, cfg_.head_dim, rng);
        dec_[l].cross_attn.init(ch, cfg_.text_embed_dim, cfg_.norm_groups,
                                cfg_.head_dim, rng);
      }
    }
    out_norm_.init(cfg_.base_channels[0], cfg_.norm_groups);
    out_conv_.init(cfg_.base_channels[0], cfg_.plan_channels(), 3, 1, rng,
                   /*zero_init=*/true);
  }

  const DenoiserConfig& config() const { return cfg_; }

  // Assembles the (obs_channels x N) conditioning block. Kept separate so
  // sampling can verify/hold observation channels fixed; when called through
  // forward() the embedding lookup participates in the gradient.
  Mat lift_observation(const ObsInput& obs) {
    const int n = cfg_.height * cfg_.width;
    Mat lifted(cfg_.obs_channels(), n);
    switch (cfg_.obs_mode) {
      case ObsMode::kTokens: {
        PP_CHECK(static_cast<int>(obs.tokens.size()) == n &&
                 static_cast<int>(obs.agent.size()) == n &&
                 static_cast<int>(obs.revealed.size()) == n);
        lifted.topRows(cfg_.embed_dim) = obj_embed_.forward(obs.tokens);
        for (int i = 0; i < n; ++i) {
          lifted(cfg_.embed_dim, i) = static_cast<S>(obs.agent[i]);
          lifted(cfg_.embed_dim + 1, i) = static_cast<S>(obs.revealed[i]);
        }
        break;
      }
      case ObsMode::kRawId: {
        PP_CHECK(static_cast<int>(obs.tokens.size()) == n &&
                 static_cast<int>(obs.agent.size()) == n &&
                 static_cast<int>(obs.revealed.size()) == n);
        const S denom = static_cast<S>(cfg_.object_vocab - 1);
        for (int i = 0; i < n; ++i) {
          lifted(0, i) = static_cast<S>(obs.tokens[i]) / denom;
          lifted(1, i) = static_cast<S>(obs.agent[i]);
          lifted(2, i) = static_cast<S>(obs.revealed[i]);
        }
        break;
      }
      case ObsMode::kScalar: {
        PP_CHECK(static_cast<int>(obs.scalar.size()) == n);
        for (int i = 0; i < n; ++i) lifted(0, i) = static_cast<S>(obs.scalar[i]);
        break;
      }
    }
    return lifted;
  }

  // Predicts the noise on the plan channels. plan: (plan_channels x N).
  Mat forward(const ObsInput& obs, const Mat& plan, int k,
              const std::vector<int32_t>& instr_ids) {
    const int H = cfg_.height, W = cfg_.width, n = H * W;
    PP_CHECK(plan.rows() == cfg_.plan_channels() && plan.cols() == n);
    PP_CHECK(static_cast<int>(instr_ids.size()) == cfg_.text_len);
    PP_CHECK_MSG(k >= 1, "diffusion step must be >= 1");

    bool any_token = false;
    text_mask_.assign(instr_ids.size(), 0);
    for (size_t i = 0; i < instr_ids.size(); ++i) {
      text_mask_[i] = instr_ids[i] != Vocabulary::kPad;
      any_token |= text_mask_[i] != 0;
    }
    if (!any_token) ++null_instruction_evals_;
    PP_CHECK_MSG(any_token, "instruction must contain at least one token");

    Mat x(cfg_.in_channels(), n);
    x.topRows(cfg_.obs_channels()) = lift_observation(obs);
    x.bottomRows(cfg_.plan_channels()) = plan;

    const Mat temb = temb_lin2_.forward(
        temb_act_.forward(temb_lin1_.forward(
            nn::sinusoidal_embedding<S>(k, cfg_.timestep_embed_dim))));
    const Vec temb_vec = temb.col(0);

    Mat ctx = text_embed_.forward(instr_ids) + text_pos_;
    ctx_rows_ = ctx.rows();

    const int D = cfg_.depth;
    skips_.assign(D, Mat());
    Mat cur = stem_.forward(x, H, W);
    int h = H, w = W;
    for (int l = 0; l < D; ++l) {
      cur = enc_[l].res.forward(cur, h, w, temb_vec);
      if (enc_[l].attn) {
        cur = enc_[l].self_attn.forward(cur);
        cur = enc_[l].cross_attn.forward(cur, ctx, text_mask_);
      }
      skips_[l] = cur;
      if (l + 1 < D) {
        cur = down_[l].forward(cur, h, w);
        h /= 2;
        w /= 2;
      }
    }
    cur = mid1_.forward(cur, h, w, temb_vec);
    cur = mid_self_.forward(cur);
    cur = mid_cross_.forward(cur, ctx, text_mask_);
    cur = mid2_.forward(cur, h, w, temb_vec);
    for (int l = D - 2; l >= 0; --l) {
      cur = up_[l].forward(cur, h, w);
      h *= 2;
      w *= 2;
      Mat cat(cur.rows() + skips_[l].rows(), cur.cols());
      cat.topRows(cur.rows()) = cur;
      cat.bottomRows(skips_[l].rows()) = skips_[l];
      cur = dec_[l].res.forward(cat, h, w, temb_vec);
      if (dec_[l].attn) {
        cur = dec_[l].self_attn.forward(cur);
        cur = dec_[l].cross_attn.forward(cur, ctx, text_mask_);
      }
    }
    PP_CHECK(h == H && w == W);
    return out_conv_.forward(out_act_.forward(out_norm_.forward(cur)), H, W);
  }

  // Backpropagates from d(eps_hat), accumulating gradients into every
  // parameter (including both embedding tables). Must follow a forward call.
  void backward(const Mat& d_eps) {
    const int D = cfg_.depth;
    Vec dtemb = Vec::Zero(cfg_.timestep_embed_dim);
    Mat dctx = Mat::Zero(ctx_rows_, cfg_.text_len);

    Mat dcur = out_norm_.backward(
        out_act_.backward(out_conv_.backward(d_eps)));
    std::vector<Mat> dskips(D);
    for (int l = 0; l < D - 1; ++l) {
      if (dec_[l].attn) {
        dcur = dec_[l].cross_attn.backward(dcur, dctx);
        dcur = dec_[l].self_attn.backward(dcur);
      }
      const Mat dcat = dec_[l].res.backward(dcur, dtemb);
      const auto up_rows = dcat.rows() - skips_[l].rows();
      dskips[l] = dcat.bottomRows(skips_[l].rows());
      dcur = up_[l].backward(dcat.topRows(up_rows));
    }
    dcur = mid2_.backward(dcur, dtemb);
    dcur = mid_cross_.backward(dcur, dctx);
    dcur = mid_self_.backward(dcur);
    dcur = mid1_.backward(dcur, dtemb);
    for (int l = D - 1; l >= 0; --l) {
      if (l + 1 < D) {
        // Encoder output feeds both the downsample path and the skip concat.
        dcur = down_[l].backward(dcur);
        dcur += dskips[l];
      }
      if (enc_[l].attn) {
        dcur = enc_[l].cross_attn.backward(dcur, dctx);
        dcur = enc_[l].self_attn.backward(dcur);
      }
      dcur = enc_[l].res.backward(dcur, dtemb);
    }
    const Mat dx = stem_.backward(dcur);

    // Timestep-embedding MLP.
    temb_lin1_.backward(temb_act_.backward(temb_lin2_.backward(dtemb)));

    // Text conditioning: token table + positional table.
    text_embed_.backward(dctx);
    gtext_pos_ += dctx;

    // Observation lift: only the token-embedding rows carry parameters.
    if (cfg_.obs_mode == ObsMode::kTokens)
      obj_embed_.backward(dx.topRows(cfg_.embed_dim));
  }

  void visit_params(const nn::ParamVisitor<S>& fn) {
    if (cfg_.obs_mode == ObsMode::kTokens)
      obj_embed_.visit("obj_embed", fn);
    text_embed_.visit("text_embed", fn);
    fn("text_pos", text_pos_, gtext_pos_);
    temb_lin1_.visit("temb1", fn);
    temb_lin2_.visit("temb2", fn);
    stem_.visit("stem", fn);
    for (int l = 0; l < cfg_.depth; ++l) {
      const std::string p = "enc" + std::to_string(l);
      enc_[l].res.visit(p + ".res", fn);
      if (enc_[l].attn) {
        enc_[l].self_attn.visit(p + ".self", fn);
        enc_[l].cross_attn.visit(p + ".cross", fn);
      }
      if (l + 1 < cfg_.depth)
        down_[l].visit("down" + std::to_string(l), fn);
    }
    mid1_.visit("mid1", fn);
    mid_self_.visit("mid_self", fn);
    mid_cross_.visit("mid_cross", fn);
    mid2_.visit("mid2", fn);
    for (int l = cfg_.depth - 2; l >= 0; --l) {
      const std::string p = "dec" + std::to_string(l);
      up_[l].visit(p + ".up", fn);
      dec_[l].res.visit(p + ".res", fn);
      if (dec_[l].attn) {
        dec_[l].self_attn.visit(p + ".self", fn);
        dec_[l].cross_attn.visit(p + ".cross", fn);
      }
    }
    out_norm_.visit("out_norm", fn);
    out_conv_.visit("out_conv", fn);
  }

  void zero_grads() {
    visit_params([](const std::string&, Mat&, Mat& g) { g.setZero(); });
  }

  size_t n_params() {
    size_t n = 0;
    visit_params([&](const std::string&, Mat& w, Mat&) { n += w.size(); });
    return n;
  }

  int64_t null_instruction_evals() const { return null_instruction_evals_; }

 private:
  struct Level {
    nn::ResBlock<S> res;
    nn::SelfAttention<S> self_attn;
    nn::CrossAttention<S> cross_attn;
    bool attn = false;
  };

  DenoiserConfig cfg_;
  nn::Embedding<S> obj_embed_;
  nn::Embedding<S> text_embed_;
  Mat text_pos_, gtext_pos_;
  nn::Linear<S> temb_lin1_, temb_lin2_;
  nn::SiLU<S> temb_act_;
  nn::Conv<S> stem_;
  std::vector<Level> enc_;
  std::vector<nn::Conv<S>> down_;
  nn::ResBlock<S> mid1_, mid2_;
  nn::SelfAttention<S> mid_self_;
  nn::CrossAttention<S> mid_cross_;
  std::vector<nn::Upsample<S>> up_;
  std::vector<Level> dec_;
  nn::GroupNorm<S> out_norm_;
  nn::SiLU<S> out_act_;
  nn::Conv<S> out_conv_;

  std::vector<Mat> skips_;
  std::vector<uint8_t> text_mask_;
  Eigen::Index ctx_rows_ = 0;
  int64_t null_instruction_evals_ = 0;
};

}  // namespace planpaint
