#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "planpaint/blocks_env.hpp"
#include "planpaint/grid_env.hpp"
#include "planpaint/rng.hpp"
#include "planpaint/setting.hpp"

namespace planpaint {

// Fixed padded instruction lengths per task family.
inline constexpr int kGridTextLen = 16;
inline constexpr int kBlocksTextLen = 32;

struct Vocabulary {
  static constexpr int32_t kPad = 0;
  static constexpr int32_t kUnk = 1;

  std::vector<std::string> id_to_token;  // [0]="<pad>", [1]="<unk>", dense
  std::map<std::string, int32_t> token_to_id;

  int32_t id(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? kUnk : it->second;
  }
  bool contains(const std::string& token) const {
    return token_to_id.count(token) != 0;
  }
  int size() const { return static_cast<int>(id_to_token.size()); }

  std::string to_json() const;
  static Vocabulary from_json(const std::string& text);
};

// The shared vocabulary covering every template word, grid object name and
// default block color; deterministic construction.
const Vocabulary& default_vocabulary();

// The eight nameable grid objects; object token id kFirstObjectId + i maps to
// name i.
const std::vector<std::string>& grid_object_names();
const std::string& object_name(int32_t object_id);

struct Instruction {
  std::string text;
  std::vector<int32_t> token_ids;  // exactly L entries, PAD-padded
  int32_t target_id = -1;
  int32_t reference_id = -1;
  Setting setting = Setting::kMO1G;
};

struct LanguageOptions {
  bool augment = false;  // rng-chosen paraphrase templates when true
};

Instruction generate_instruction(const EnvState& state, Setting setting,
                                 Rng& rng,
                                 const Vocabulary& vocab = default_vocabulary(),
                                 const LanguageOptions& options = {});

// One "stack <upper> cube on top of <lower> cube ." sentence per constraint.
Instruction generate_blocks_instruction(
    const BlockState& state, const std::vector<Constraint>& constraints,
    Setting setting, Rng& rng, const Vocabulary& vocab = default_vocabulary(),
    const LanguageOptions& options = {});

// Lowercased whitespace tokenization, UNK for out-of-vocabulary words, padded
// or truncated to exactly `length` ids.
std::vector<int32_t> tokenize(const std::string& text, const Vocabulary& vocab,
                              int length);
// Joins non-PAD tokens with single spaces.
std::string detokenize(const std::vector<int32_t>& ids,
                       const Vocabulary& vocab);

}  // namespace planpaint
