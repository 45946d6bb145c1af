#pragma once

#include <string>
#include <utility>
#include <vector>

namespace fixture {

// (prediction, reference) pairs; the first three are identical.
inline const std::vector<std::pair<std::string, std::string>>& caption_pairs() {
  static const std::vector<std::pair<std::string, std::string>> pairs = {
      {"a red leather couch near the window", "a red leather couch near the window"},
      {"a small wooden table in the corner of the room", "a small wooden table in the corner of the room"},
      {"a white ceramic toilet next to the sink", "a white ceramic toilet next to the sink"},
      {"a red couch in room", "a red couch in the room"},
      {"a blue bed with pillows", "a large blue bed with white pillows"},
      {"a green plant in a pot", "a potted plant with green leaves in a clay pot"},
      {"a black tv on the wall", "a black television mounted on the wall"},
      {"the the the the", "the cat sat on the mat"},
      {"a brown table", "a brown wooden table near the door of the kitchen"},
      {"a grey fabric sofa by the door", "a gray fabric couch near the door"},
  };
  return pairs;
}

}  // namespace fixture
