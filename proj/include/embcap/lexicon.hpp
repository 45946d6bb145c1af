#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "embcap/scene.hpp"

// Word lists shared by the scene generator, the caption noise model, and the
// toy captioner's vocabulary.
namespace embcap::lexicon {

std::span<const std::string_view> colors();
std::span<const std::string_view> materials(Category c);
std::span<const std::string_view> all_materials();

struct Context {
  std::string_view noun;    // attribute token
  std::string_view phrase;  // rendered clause, e.g. "near the window"
};
std::span<const Context> contexts();

/// Extra nouns a corrupted caption may hallucinate ("with a cat on it").
std::span<const std::string_view> hallucinations();

/// Boilerplate prefixes a captioner may prepend ("a picture of").
std::span<const std::string_view> boilerplate_prefixes();

/// Renders the canonical caption "a {color} {material} {category} {context}".
std::string render_caption(std::string_view color, std::string_view material, Category c,
                           std::string_view context_phrase);

std::string_view context_phrase_for(std::string_view noun);

/// Every word that can appear in a generated or corrupted caption, sorted and unique.
std::vector<std::string> all_words();

}  // namespace embcap::lexicon
