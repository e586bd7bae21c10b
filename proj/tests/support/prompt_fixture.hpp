#pragma once

#include "demokit/act_executor.hpp"
#include "demokit/store.hpp"

#include <cstdlib>
#include <string>
#include <vector>

namespace demokit::testing {

inline Observation fixture_observation() { return {"fixture/screen_3.png", "screen_3.png", 1080, 2400}; }

inline std::vector<KnowledgeEntry> fixture_demos() {
    KnowledgeEntry e;
    e.entry_id = "demo-7";
    e.instruction = "Search for hotels in Rome on Booking";
    e.app = "Booking";
    e.source_task_id = "demo-7";
    e.actions = {"CLICK[540,310]", "TYPE[Rome]", "TASK_COMPLETE[]"};
    e.descriptions = {"On Booking Home Screen, tap search field, to enter destination",
                      "On Destination Search Screen, type 'Rome', to set destination",
                      "On Search Results Screen, complete task, hotels listed"};
    return {e};
}

inline std::vector<HistoryItem> fixture_history() {
    DescriptionRecord d1;
    d1.text = "On Booking Home Screen, tap search field, to enter destination";
    DescriptionRecord d2;
    d2.text = "On Destination Search Screen, type 'Paris', to set destination";
    return {{action::Click{540, 310}, d1}, {action::Type{"Paris"}, d2}};
}

inline const std::string kFixtureInstruction = "Search for hotels in Paris on Booking";

/// Compares against tests/golden/<name>; with DEMOKIT_UPDATE_GOLDEN set the file is rewritten instead.
inline bool matches_golden(const std::string& name, const std::string& actual, const fs::path& golden_dir) {
    const fs::path path = golden_dir / name;
    if (std::getenv("DEMOKIT_UPDATE_GOLDEN")) {
        write_text_file(path, actual);
        return true;
    }
    return read_text_file(path) == actual;
}

} // namespace demokit::testing
