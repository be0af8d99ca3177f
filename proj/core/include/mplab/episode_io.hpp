#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mplab/worldsim.hpp"

namespace mplab::io {

inline constexpr const char* kEpisodeMagic = "MPLAB-EP v1";

// Newline-delimited records: the magic line, one header object carrying
// seed, config and map layout, then one object per frame with the
// run-length-encoded view, agent states, egomotion and branch log.
void save_episode(const world::Episode& ep, std::ostream& os);
void save_episode_file(const world::Episode& ep, const std::string& path);

// Rebuilds the episode, re-deriving the static view of each frame from
// the map and the stored view relation. Throws std::runtime_error on a
// malformed file, naming what failed.
world::Episode load_episode(std::istream& is);
world::Episode load_episode_file(const std::string& path);

// Canonical file name for episode `index` within a dataset directory.
std::string episode_filename(int index);

// Loads every *.ep file in a directory, sorted by name.
std::vector<world::Episode> load_episode_dir(const std::string& dir);

}  // namespace mplab::io
