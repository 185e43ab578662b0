// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

namespace frelay::app {

inline constexpr const char* kVersion = "1.0.0";

// Comma list or inclusive start:stop:step range; "inf" accepted.
std::vector<double> parse_values(const std::string& text);
// Flat `key = value` lines, '#' comments.
std::map<std::string, std::string> parse_config_text(const std::string& text);

std::string format_number(double v);  // 12 significant digits

// Entry point shared by the executable and the tests. Returns the process exit code.
int run(const std::vector<std::string>& args);

}  // namespace frelay::app
