#include "planpaint/language.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "json.hpp"

namespace planpaint {
namespace {

// Template families. Placeholders: %o object, %r reference, %t target,
// %u upper color, %l lower color. Index 0 is the canonical form used when
// augmentation is off.
const std::vector<std::string>& goto_templates() {
  static const std::vector<std::string> t = {
      "go to the %o .",
      "head to the %o .",
      "walk to the %o .",
      "navigate to the %o .",
  };
  return t;
}

const std::vector<std::string>& pmo2g_templates() {
  static const std::vector<std::string> t = {
      "first , go to the %r , then head towards the %t .",
      "first , head to the %r , then walk to the %t .",
      "first , navigate to the %r , then go to the %t .",
  };
  return t;
}

const std::vector<std::string>& stack_templates() {
  static const std::vector<std::string> t = {
      "stack %u cube on top of %l cube .",
      "put %u cube on top of %l cube .",
      "place %u cube on %l cube .",
  };
  return t;
}

std::string substitute(std::string text, const std::string& key,
                       const std::string& value) {
  for (size_t at = text.find(key); at != std::string::npos;
       at = text.find(key, at + value.size()))
    text.replace(at, key.size(), value);
  return text;
}

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> words;
  std::string w;
  while (in >> w) {
    std::transform(w.begin(), w.end(), w.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    words.push_back(w);
  }
  return words;
}

const std::vector<std::string>& default_block_colors() {
  static const std::vector<std::string> colors = {"red", "green", "blue",
                                                  "yellow"};
  return colors;
}

size_t pick_template(size_t count, Rng& rng, const LanguageOptions& options) {
  return options.augment ? rng.next_below(count) : 0;
}

const std::string& color_word(const BlockState& state, int32_t block_id,
                              const Vocabulary& vocab) {
  PP_CHECK_MSG(block_id >= 0 &&
                   block_id < static_cast<int32_t>(state.config.colors.size()),
               "block id has no color name");
  const std::string& word = state.config.colors[block_id];
  if (!vocab.contains(word))
    throw Error("object name missing from vocabulary: '" + word + "'");
  return word;
}

Instruction finish(std::string text, Setting setting, int32_t target_id,
                   int32_t reference_id, const Vocabulary& vocab, int length) {
  Instruction ins;
  ins.text = std::move(text);
  ins.setting = setting;
  ins.target_id = target_id;
  ins.reference_id = reference_id;
  ins.token_ids = tokenize(ins.text, vocab, length);
  return ins;
}

}  // namespace

std::string Vocabulary::to_json() const {
  nlohmann::json j;
  j["tokens"] = id_to_token;
  return j.dump();
}

Vocabulary Vocabulary::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad Vocabulary JSON: ") + e.what());
  }
  Vocabulary v;
  v.id_to_token = j.at("tokens").get<std::vector<std::string>>();
  PP_CHECK_MSG(v.id_to_token.size() >= 2 && v.id_to_token[0] == "<pad>" &&
                   v.id_to_token[1] == "<unk>",
               "vocabulary must reserve <pad>=0 and <unk>=1");
  for (size_t i = 0; i < v.id_to_token.size(); ++i)
    v.token_to_id[v.id_to_token[i]] = static_cast<int32_t>(i);
  PP_CHECK_MSG(v.token_to_id.size() == v.id_to_token.size(),
               "vocabulary has duplicate tokens");
  return v;
}

const std::vector<std::string>& grid_object_names() {
  static const std::vector<std::string> names = {
      "apple",    "banana",   "tomato", "broccoli",
      "cucumber", "lettuce",  "pepper", "onion"};
  return names;
}

const std::string& object_name(int32_t object_id) {
  const auto& names = grid_object_names();
  const int idx = object_id - kFirstObjectId;
  PP_CHECK_MSG(idx >= 0 && idx < static_cast<int>(names.size()),
               "token id " + std::to_string(object_id) +
                   " is not a nameable object");
  return names[idx];
}

const Vocabulary& default_vocabulary() {
  static const Vocabulary vocab = [] {
    std::set<std::string> words;
    auto add_all = [&](const std::vector<std::string>& templates) {
      for (const auto& t : templates)
        for (const auto& w : split_words(t))
          if (w[0] != '%') words.insert(w);
    };
    add_all(goto_templates());
    add_all(pmo2g_templates());
    add_all(stack_templates());
    for (const auto& n : grid_object_names()) words.insert(n);
    for (const auto& c : default_block_colors()) words.insert(c);

    Vocabulary v;
    v.id_to_token = {"<pad>", "<unk>"};
    v.id_to_token.insert(v.id_to_token.end(), words.begin(), words.end());
    for (size_t i = 0; i < v.id_to_token.size(); ++i)
      v.token_to_id[v.id_to_token[i]] = static_cast<int32_t>(i);
    return v;
  }();
  return vocab;
}

Instruction generate_instruction(const EnvState& state, Setting setting,
                                 Rng& rng, const Vocabulary& vocab,
                                 const LanguageOptions& options) {
  PP_CHECK_MSG(!is_blocks_setting(setting),
               "blocks settings use generate_blocks_instruction");
  const std::string& target = object_name(state.target_id);
  if (!vocab.contains(target))
    throw Error("object name missing from vocabulary: '" + target + "'");
  // The targeted object must actually be in the environment.
  state.target_cell();

  std::string text;
  if (setting == Setting::kPMO2G) {
    PP_CHECK_MSG(state.reference_id >= 0, "P-MO2G state has no reference");
    const std::string& ref = object_name(state.reference_id);
    if (!vocab.contains(ref))
      throw Error("object name missing from vocabulary: '" + ref + "'");
    state.find_object(state.reference_id);
    const auto& ts = pmo2g_templates();
    text = substitute(
        substitute(ts[pick_template(ts.size(), rng, options)], "%r", ref), "%t",
        target);
  } else {
    const auto& ts = goto_templates();
    text = substitute(ts[pick_template(ts.size(), rng, options)], "%o", target);
  }
  return finish(std::move(text), setting, state.target_id, state.reference_id,
                vocab, kGridTextLen);
}

Instruction generate_blocks_instruction(
    const BlockState& state, const std::vector<Constraint>& constraints,
    Setting setting, Rng& rng, const Vocabulary& vocab,
    const LanguageOptions& options) {
  PP_CHECK_MSG(is_blocks_setting(setting), "expected STACK or REARRANGE");
  PP_CHECK_MSG(!constraints.empty(), "need at least one constraint");
  const auto& ts = stack_templates();
  std::string text;
  for (const Constraint& k : constraints) {
    std::string sentence = ts[pick_template(ts.size(), rng, options)];
    sentence = substitute(sentence, "%u", color_word(state, k.upper, vocab));
    sentence = substitute(sentence, "%l", color_word(state, k.lower, vocab));
    if (!text.empty()) text += ' ';
    text += sentence;
  }
  return finish(std::move(text), setting, /*target_id=*/-1, /*reference_id=*/-1,
                vocab, kBlocksTextLen);
}

std::vector<int32_t> tokenize(const std::string& text, const Vocabulary& vocab,
                              int length) {
  PP_CHECK(length >= 1);
  std::vector<int32_t> ids;
  ids.reserve(length);
  for (const std::string& w : split_words(text)) {
    if (static_cast<int>(ids.size()) == length) break;
    ids.push_back(vocab.id(w));
  }
  ids.resize(length, Vocabulary::kPad);
  return ids;
}

std::string detokenize(const std::vector<int32_t>& ids,
                       const Vocabulary& vocab) {
  std::string out;
  for (int32_t id : ids) {
    if (id == Vocabulary::kPad) continue;
    PP_CHECK_MSG(id >= 0 && id < vocab.size(), "token id out of range");
    if (!out.empty()) out += ' ';
    out += vocab.id_to_token[id];
  }
  return out;
}

}  // namespace planpaint
