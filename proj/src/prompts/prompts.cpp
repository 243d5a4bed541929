#include "bt/prompts/prompts.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <random>
#include <sstream>

#include "bt/core/errors.hpp"
#include "bt/core/rng.hpp"
#include "imagenet_templates.inc"

namespace bt::prompts {
namespace {

std::size_t count_occurrences(std::string_view s, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string_view::npos; pos = s.find(needle, pos + 1)) {
    ++n;
  }
  return n;
}

}  // namespace

PromptTemplate::PromptTemplate(int id, std::string pattern) : id_(id), pattern_(std::move(pattern)) {
  if (count_occurrences(pattern_, kPlaceholder) != 1) {
    throw ValidationError("template " + std::to_string(id_) +
                          " must contain the {C} placeholder exactly once: '" + pattern_ + "'");
  }
}

TemplateBank::TemplateBank(std::vector<PromptTemplate> templates) : templates_(std::move(templates)) {
  if (templates_.empty()) throw ValidationError("template bank is empty");
  std::sort(templates_.begin(), templates_.end(),
            [](const auto& a, const auto& b) { return a.id() < b.id(); });
  for (std::size_t i = 0; i < templates_.size(); ++i) {
    if (templates_[i].id() != static_cast<int>(i) + 1) {
      throw ValidationError("template ids must be 1.." + std::to_string(templates_.size()) +
                            " without gaps or duplicates");
    }
  }
}

TemplateBank TemplateBank::parse(std::string_view text, const std::string& source) {
  std::vector<PromptTemplate> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    auto line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw ParseError(source, line_no, "expected id<TAB>pattern");
    int id = 0;
    auto [ptr, ec] = std::from_chars(line.data(), line.data() + tab, id);
    if (ec != std::errc{} || ptr != line.data() + tab) {
      throw ParseError(source, line_no, "template id is not an integer");
    }
    try {
      out.emplace_back(id, std::string(line.substr(tab + 1)));
    } catch (const ValidationError& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  return TemplateBank(std::move(out));
}

TemplateBank TemplateBank::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open template bank " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

const TemplateBank& TemplateBank::imagenet() {
  static const TemplateBank bank = parse(kImagenetTemplatesTsv, "imagenet_templates.tsv");
  return bank;
}

const PromptTemplate& TemplateBank::at(int id) const {
  if (id < 1 || id > static_cast<int>(templates_.size())) {
    throw LookupError("no template with id " + std::to_string(id));
  }
  return templates_[static_cast<std::size_t>(id) - 1];
}

std::string render_template(const PromptTemplate& tmpl, std::string_view class_name) {
  if (class_name.empty()) throw ValidationError("class name must be non-empty");
  std::string out = tmpl.pattern();
  out.replace(out.find(kPlaceholder), kPlaceholder.size(), class_name);
  return out;
}

SampledPrompt sample_prompt(std::string_view class_name, std::uint64_t seed,
                            const TemplateBank& bank) {
  if (class_name.empty()) throw ValidationError("class name must be non-empty");
  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_int_distribution<int> pick(1, static_cast<int>(bank.size()));
  const auto& tmpl = bank.at(pick(rng));
  return {render_template(tmpl, class_name), tmpl.id()};
}

std::string render_style_prompt(std::string_view class_name, std::string_view token_name) {
  if (class_name.empty()) throw ValidationError("class name must be non-empty");
  if (token_name.empty()) throw ValidationError("style token name must be non-empty");
  std::string out = "A ";
  out += class_name;
  out += " photo in the style of ";
  out += token_name;
  return out;
}

}  // namespace bt::prompts
