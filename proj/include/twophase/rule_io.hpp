#pragma once

// Plain-text serialization of fitted moment models and sampling rules.

#include "twophase/kv_config.hpp"
#include "twophase/pipeline.hpp"

#include <string>
#include <vector>

namespace twophase {

struct RuleFile {
    std::string problem;
    double varpi = 0.0;
    double kappa = 0.0;
    std::shared_ptr<const MomentModels> models;
    std::vector<NamedRule> rules;

    const SamplingRule& rule(const std::string& name) const;
};

/// `comments` are written as a leading `#` block.
std::string serialize_rules(const RuleFile& file, const std::vector<std::string>& comments = {});
RuleFile parse_rules(const KvConfig& cfg);

void save_rules(const std::string& path, const RuleFile& file, const std::vector<std::string>& comments = {});
RuleFile load_rules(const std::string& path);

} // namespace twophase
