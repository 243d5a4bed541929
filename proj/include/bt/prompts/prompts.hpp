#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace bt::prompts {

/// Placeholder for the class name inside a template pattern.
inline constexpr std::string_view kPlaceholder = "{C}";
/// Default textual slot for a learned style token.
inline constexpr std::string_view kDefaultStyleToken = "S*";

/// A prompt pattern with exactly one class placeholder.
class PromptTemplate {
 public:
  PromptTemplate(int id, std::string pattern);

  int id() const noexcept { return id_; }
  const std::string& pattern() const noexcept { return pattern_; }

 private:
  int id_;
  std::string pattern_;
};

/// Ordered, gap-free set of templates with ids 1..N.
class TemplateBank {
 public:
  explicit TemplateBank(std::vector<PromptTemplate> templates);

  /// Parses "id<TAB>pattern" lines. Blank lines and '#' comments are skipped.
  static TemplateBank parse(std::string_view text, const std::string& source = "<memory>");
  static TemplateBank load(const std::filesystem::path& path);
  /// The 27-entry ImageNet template bank shipped in resources/.
  static const TemplateBank& imagenet();

  std::size_t size() const noexcept { return templates_.size(); }
  const PromptTemplate& at(int id) const;
  const std::vector<PromptTemplate>& templates() const noexcept { return templates_; }

 private:
  std::vector<PromptTemplate> templates_;
};

/// Replaces the placeholder with `class_name` verbatim.
std::string render_template(const PromptTemplate& tmpl, std::string_view class_name);

struct SampledPrompt {
  std::string prompt;
  int template_id = 0;
};

/// Uniform draw over the bank; a pure function of (class_name, seed).
SampledPrompt sample_prompt(std::string_view class_name, std::uint64_t seed,
                            const TemplateBank& bank = TemplateBank::imagenet());

/// "A {class} photo in the style of {token}".
std::string render_style_prompt(std::string_view class_name,
                                std::string_view token_name = kDefaultStyleToken);

}  // namespace bt::prompts
