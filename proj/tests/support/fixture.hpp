// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tmlpred/workspace.hpp>

#include <filesystem>
#include <map>
#include <string>

namespace testsupport
{

inline std::filesystem::path source_dir()
{
    return TMLPRED_SOURCE_DIR;
}

inline std::filesystem::path fixture_dir()
{
    return source_dir() / "data" / "fixture";
}

inline tmlpred::ws::EnvLookup no_env()
{
    return [](const std::string&) -> std::optional<std::string> { return std::nullopt; };
}

/// The shipped fixture config, resolved without consulting the process environment.
inline tmlpred::ws::RunConfig fixture_config(const std::map<std::string, std::string>& cli = {})
{
    auto const path = fixture_dir() / "config.json";
    return tmlpred::ws::RunConfig::resolve(tmlpred::text::read_json_file(path.string()), fixture_dir().string(),
                                           no_env(), cli);
}

inline std::unique_ptr<tmlpred::ws::Workspace> fixture_workspace(const std::map<std::string, std::string>& cli = {})
{
    return tmlpred::ws::Workspace::load(fixture_config(cli));
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name)
{
    auto const dir = std::filesystem::temp_directory_path() / ("tmlpred-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace testsupport
