#pragma once

// Run configuration: one JSON file with a schema_version and four sections
// (dataset / model / train / eval). Every key is optional and falls back to
// the built-in default; unknown keys are rejected so typos fail loudly.

#include <initializer_list>
#include <set>
#include <string>

#include <json.hpp>

#include "pbd/eval.hpp"
#include "pbd/model.hpp"
#include "pbd/synth.hpp"
#include "pbd/train.hpp"

namespace pbd {

struct RunConfig {
    DatasetConfig dataset;
    ModelConfig model;
    TrainConfig train;
    EvalConfig eval;
};

namespace config_detail {

inline void reject_unknown(const json& j, const std::string& section,
                           std::initializer_list<const char*> known) {
    require(j.is_object(), "config: section " + section + " must be an object");
    std::set<std::string> ok(known.begin(), known.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        require(ok.count(it.key()) == 1,
                "config: unknown key \"" + it.key() + "\" in section " + section);
}

template <class T>
void get(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace config_detail

inline DatasetConfig dataset_config_from_json(const json& j) {
    using config_detail::get;
    config_detail::reject_unknown(
        j, "dataset",
        {"seed", "n_train", "n_test", "width", "height", "min_cathode", "max_cathode",
         "pure_fraction", "blur_fraction", "tilt_fraction", "regular_max_interference",
         "regular_max_plates", "tough_min_interference", "tough_min_plates", "stack_axis",
         "overhang_mean", "overhang_std", "noise_std"});
    DatasetConfig c;
    get(j, "seed", c.seed);
    get(j, "n_train", c.n_train);
    get(j, "n_test", c.n_test);
    get(j, "width", c.width);
    get(j, "height", c.height);
    get(j, "min_cathode", c.min_cathode);
    get(j, "max_cathode", c.max_cathode);
    get(j, "pure_fraction", c.pure_fraction);
    get(j, "blur_fraction", c.blur_fraction);
    get(j, "tilt_fraction", c.tilt_fraction);
    get(j, "regular_max_interference", c.regular_max_interference);
    get(j, "regular_max_plates", c.regular_max_plates);
    get(j, "tough_min_interference", c.tough_min_interference);
    get(j, "tough_min_plates", c.tough_min_plates);
    if (j.contains("stack_axis"))
        c.stack_axis = stack_axis_from_string(j.at("stack_axis").get<std::string>());
    get(j, "overhang_mean", c.overhang_mean);
    get(j, "overhang_std", c.overhang_std);
    get(j, "noise_std", c.noise_std);
    return c;
}

inline ModelConfig model_config_from_section(const json& j) {
    using config_detail::get;
    config_detail::reject_unknown(j, "model",
                                  {"widths", "share_streams", "prompt_kernels", "n_state",
                                   "share_scan_params", "norm_after_filter", "seed"});
    ModelConfig c;
    if (j.contains("widths")) c.encoder.widths = j.at("widths").get<std::array<int, 5>>();
    get(j, "share_streams", c.encoder.share_streams);
    get(j, "prompt_kernels", c.prompt_kernels);
    get(j, "n_state", c.n_state);
    get(j, "share_scan_params", c.share_scan_params);
    get(j, "norm_after_filter", c.norm_after_filter);
    get(j, "seed", c.seed);
    return c;
}

inline TrainConfig train_config_from_json(const json& j) {
    using config_detail::get;
    config_detail::reject_unknown(
        j, "train",
        {"input", "epochs", "batch", "max_iters", "lr", "beta1", "beta2", "eps", "weight_decay",
         "clip_norm", "lr_step", "lr_gamma", "augment", "radius_policy", "line_thickness",
         "loss_weights", "seed"});
    TrainConfig c;
    get(j, "input", c.input);
    get(j, "epochs", c.epochs);
    get(j, "batch", c.batch);
    get(j, "max_iters", c.max_iters);
    get(j, "lr", c.lr);
    get(j, "beta1", c.beta1);
    get(j, "beta2", c.beta2);
    get(j, "eps", c.eps);
    get(j, "weight_decay", c.weight_decay);
    get(j, "clip_norm", c.clip_norm);
    get(j, "lr_step", c.lr_step);
    get(j, "lr_gamma", c.lr_gamma);
    get(j, "augment", c.augment);
    get(j, "radius_policy", c.radius_policy);
    get(j, "line_thickness", c.line_thickness);
    if (j.contains("loss_weights")) {
        auto w = j.at("loss_weights").get<std::array<double, 4>>();
        c.weights = {w[0], w[1], w[2], w[3]};
    }
    get(j, "seed", c.seed);
    c.check();
    return c;
}

inline EvalConfig eval_config_from_json(const json& j) {
    using config_detail::get;
    config_detail::reject_unknown(j, "eval",
                                  {"input", "threshold", "mode", "radius_policy", "prompt_id"});
    EvalConfig c;
    get(j, "input", c.input);
    get(j, "threshold", c.threshold);
    if (j.contains("mode")) c.mode = metric_mode_from_string(j.at("mode").get<std::string>());
    get(j, "radius_policy", c.radius_policy);
    get(j, "prompt_id", c.prompt_id);
    c.check();
    return c;
}

inline RunConfig run_config_from_json(const json& j) {
    config_detail::reject_unknown(j, "(top level)",
                                  {"schema_version", "dataset", "model", "train", "eval"});
    require(j.contains("schema_version"), "config: schema_version is required");
    require(j.at("schema_version").is_number_integer() &&
                j.at("schema_version").get<int>() == 1,
            "config: unsupported schema_version (expected 1)");
    RunConfig c;
    if (j.contains("dataset")) c.dataset = dataset_config_from_json(j.at("dataset"));
    if (j.contains("model")) c.model = model_config_from_section(j.at("model"));
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (j.contains("eval")) c.eval = eval_config_from_json(j.at("eval"));
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    require(bool(in), "config: cannot open " + path);
    json j = json::parse(in, nullptr, false);
    require(!j.is_discarded(), "config: " + path + " is not valid JSON");
    return run_config_from_json(j);
}

inline json run_config_to_json(const RunConfig& c) {
    return json{
        {"schema_version", 1},
        {"dataset",
         {{"seed", c.dataset.seed},
          {"n_train", c.dataset.n_train},
          {"n_test", c.dataset.n_test},
          {"width", c.dataset.width},
          {"height", c.dataset.height},
          {"min_cathode", c.dataset.min_cathode},
          {"max_cathode", c.dataset.max_cathode},
          {"pure_fraction", c.dataset.pure_fraction},
          {"blur_fraction", c.dataset.blur_fraction},
          {"tilt_fraction", c.dataset.tilt_fraction},
          {"regular_max_interference", c.dataset.regular_max_interference},
          {"regular_max_plates", c.dataset.regular_max_plates},
          {"tough_min_interference", c.dataset.tough_min_interference},
          {"tough_min_plates", c.dataset.tough_min_plates},
          {"stack_axis", to_string(c.dataset.stack_axis)},
          {"overhang_mean", c.dataset.overhang_mean},
          {"overhang_std", c.dataset.overhang_std},
          {"noise_std", c.dataset.noise_std}}},
        {"model",
         {{"widths", c.model.encoder.widths},
          {"share_streams", c.model.encoder.share_streams},
          {"prompt_kernels", c.model.prompt_kernels},
          {"n_state", c.model.n_state},
          {"share_scan_params", c.model.share_scan_params},
          {"norm_after_filter", c.model.norm_after_filter},
          {"seed", c.model.seed}}},
        {"train",
         {{"input", c.train.input},
          {"epochs", c.train.epochs},
          {"batch", c.train.batch},
          {"max_iters", c.train.max_iters},
          {"lr", c.train.lr},
          {"beta1", c.train.beta1},
          {"beta2", c.train.beta2},
          {"eps", c.train.eps},
          {"weight_decay", c.train.weight_decay},
          {"clip_norm", c.train.clip_norm},
          {"lr_step", c.train.lr_step},
          {"lr_gamma", c.train.lr_gamma},
          {"augment", c.train.augment},
          {"radius_policy", c.train.radius_policy},
          {"line_thickness", c.train.line_thickness},
          {"loss_weights",
           std::array<double, 4>{c.train.weights.l1, c.train.weights.l2, c.train.weights.l3,
                                 c.train.weights.l4}},
          {"seed", c.train.seed}}},
        {"eval",
         {{"input", c.eval.input},
          {"threshold", c.eval.threshold},
          {"mode", to_string(c.eval.mode)},
          {"radius_policy", c.eval.radius_policy},
          {"prompt_id", c.eval.prompt_id}}}};
}

}  // namespace pbd
