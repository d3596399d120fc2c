#pragma once

#include <string>

#include "dg/attack_sim.hpp"
#include "dg/dataset.hpp"
#include "dg/metrics.hpp"
#include "dg/pipeline.hpp"
#include "dg/pretrain.hpp"
#include "json.hpp"

namespace dg {

// Everything the CLI can tune, grouped into flat key=value sections. The same
// field table drives the INI form, --dump-config and the JSON echo written to
// run manifests, so config -> manifest -> config is lossless.
struct RunConfig {
    ModelConfig model;
    ScheduleConfig schedule;
    DatasetConfig dataset;
    PretrainConfig pretrain;
    ProtectionConfig protection;
    FinetuneConfig finetune;
    EfficacyTrialConfig trial;
    EditConfig edit;
    int ddim_steps = 20;
};

std::string dump_ini(const RunConfig& cfg);
void apply_ini_text(RunConfig& cfg, const std::string& text);
void apply_ini_file(RunConfig& cfg, const std::string& path);

nlohmann::json config_to_json(const RunConfig& cfg);
void config_from_json(RunConfig& cfg, const nlohmann::json& j);

}  // namespace dg
