#include "embcap/lexicon.hpp"

#include <array>
#include <set>

namespace embcap::lexicon {

namespace {

constexpr std::array<std::string_view, 9> kColors = {
    "red", "blue", "green", "white", "black", "brown", "grey", "beige", "yellow"};

constexpr std::array<std::string_view, 3> kCouch = {"leather", "fabric", "velvet"};
constexpr std::array<std::string_view, 3> kPlant = {"ceramic", "plastic", "clay"};
constexpr std::array<std::string_view, 2> kBed = {"wooden", "metal"};
constexpr std::array<std::string_view, 2> kToilet = {"ceramic", "porcelain"};
constexpr std::array<std::string_view, 2> kTv = {"plastic", "metal"};
constexpr std::array<std::string_view, 3> kTable = {"wooden", "glass", "marble"};

constexpr std::array<std::string_view, 11> kAllMaterials = {
    "ceramic", "clay",    "fabric",    "glass",  "leather", "marble",
    "metal",   "plastic", "porcelain", "velvet", "wooden"};

constexpr std::array<Context, 5> kContexts = {{
    {"window", "near the window"},
    {"wall", "against the wall"},
    {"corner", "in the corner"},
    {"door", "next to the door"},
    {"rug", "on the rug"},
}};

constexpr std::array<std::string_view, 6> kHallucinations = {"cat", "lamp", "book",
                                                             "pillow", "vase", "bird"};

constexpr std::array<std::string_view, 3> kBoilerplate = {"a picture of", "a photo of",
                                                          "an image of"};

}  // namespace

std::span<const std::string_view> colors() { return kColors; }

std::span<const std::string_view> materials(Category c) {
  switch (c) {
    case Category::Couch: return kCouch;
    case Category::PottedPlant: return kPlant;
    case Category::Bed: return kBed;
    case Category::Toilet: return kToilet;
    case Category::Tv: return kTv;
    case Category::Table: return kTable;
  }
  return kCouch;
}

std::span<const std::string_view> all_materials() { return kAllMaterials; }

std::span<const Context> contexts() { return kContexts; }
std::span<const std::string_view> hallucinations() { return kHallucinations; }
std::span<const std::string_view> boilerplate_prefixes() { return kBoilerplate; }

std::string render_caption(std::string_view color, std::string_view material, Category c,
                           std::string_view context_phrase) {
  std::string s = "a ";
  s.append(color).append(" ").append(material).append(" ").append(category_name(c));
  if (!context_phrase.empty()) s.append(" ").append(context_phrase);
  return s;
}

std::string_view context_phrase_for(std::string_view noun) {
  for (const auto& c : kContexts) {
    if (c.noun == noun) return c.phrase;
  }
  return {};
}

std::vector<std::string> all_words() {
  std::set<std::string> words;
  auto add_phrase = [&](std::string_view p) {
    for (auto& t : tokenize(p)) words.insert(std::move(t));
  };
  for (auto w : kColors) add_phrase(w);
  for (auto w : all_materials()) add_phrase(w);
  for (int i = 0; i < kNumClasses; ++i) add_phrase(category_name(static_cast<Category>(i)));
  for (const auto& c : kContexts) add_phrase(c.phrase);
  for (auto w : kHallucinations) add_phrase(w);
  for (auto w : kBoilerplate) add_phrase(w);
  add_phrase("a with on it and");
  return {words.begin(), words.end()};
}

}  // namespace embcap::lexicon
