#pragma once

#include "demokit/action.hpp"
#include "demokit/store.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace demokit::testing {

class TempDir {
  public:
    TempDir() {
        std::string tmpl = (fs::temp_directory_path() / "demokit-XXXXXX").string();
        if (!mkdtemp(tmpl.data()))
            throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const noexcept { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

  private:
    fs::path path_;
};

/// A loopback port with nothing listening on it.
inline int unused_local_port() {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
        throw std::runtime_error("bind failed");
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    ::close(fd);
    return ntohs(addr.sin_port);
}

inline void write_png(const fs::path& path, int width, int height, int shade) {
    fs::create_directories(path.parent_path());
    cv::Mat img(height, width, CV_8UC3, cv::Scalar(shade % 256, (shade * 7) % 256, (shade * 13) % 256));
    if (!cv::imwrite(path.string(), img))
        throw std::runtime_error("cannot write " + path.string());
}

/// A gold trajectory whose screenshots exist under `dir`. The last action
/// should be TASK_COMPLETE for loaders that require it.
inline Trajectory make_trajectory(const fs::path& dir, const std::string& task_id, const std::string& app,
                                  const std::string& instruction, const std::vector<Action>& actions,
                                  int width = 120, int height = 240) {
    Trajectory t;
    t.task_id = task_id;
    t.app = app;
    t.instruction = instruction;
    t.screen_width = width;
    t.screen_height = height;
    t.base_dir = dir;
    for (std::size_t i = 0; i < actions.size(); ++i) {
        Step s;
        s.index = static_cast<int>(i);
        s.screenshot = "shots/" + task_id + "_" + std::to_string(i) + ".png";
        s.action = actions[i];
        write_png(dir / s.screenshot, width, height, static_cast<int>(i * 31 + task_id.size()));
        t.steps.push_back(std::move(s));
    }
    return t;
}

inline std::string random_payload(std::mt19937& rng) {
    static const std::string alphabet = "abcXYZ019 ,[]()'\"-_.:$%";
    std::uniform_int_distribution<int> len(0, 24);
    std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
    std::string s;
    const int n = len(rng);
    for (int i = 0; i < n; ++i)
        s += alphabet[pick(rng)];
    return s;
}

/// Uniform over the seven action kinds; payloads include brackets, commas and spaces.
inline Action random_action(std::mt19937& rng, int max_x = 1080, int max_y = 2400) {
    std::uniform_int_distribution<int> kind(0, 6);
    std::uniform_int_distribution<int> xs(0, max_x - 1);
    std::uniform_int_distribution<int> ys(0, max_y - 1);
    std::uniform_int_distribution<int> dir(0, 3);
    switch (kind(rng)) {
    case 0: return action::Click{xs(rng), ys(rng)};
    case 1: return action::Type{random_payload(rng)};
    case 2: return action::Swipe{static_cast<SwipeDirection>(dir(rng))};
    case 3: return action::PressHome{};
    case 4: return action::PressBack{};
    case 5: return action::PressEnter{};
    default: return action::TaskComplete{random_payload(rng)};
    }
}

/// Random non-terminal actions followed by TASK_COMPLETE.
inline std::vector<Action> random_episode(std::mt19937& rng, int steps, int max_x, int max_y) {
    std::vector<Action> out;
    for (int i = 0; i + 1 < steps; ++i) {
        Action a = random_action(rng, max_x, max_y);
        while (action_type(a) == ActionType::TaskComplete)
            a = random_action(rng, max_x, max_y);
        out.push_back(a);
    }
    out.push_back(action::TaskComplete{});
    return out;
}

} // namespace demokit::testing
