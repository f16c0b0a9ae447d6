// Command-line front end: dataset generation, training, evaluation and the
// annotation utilities, all driven by one JSON config file.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pbd/annotate.hpp"
#include "pbd/checkpoint.hpp"
#include "pbd/config.hpp"
#include "pbd/eval.hpp"
#include "pbd/report.hpp"
#include "pbd/synth.hpp"
#include "pbd/train.hpp"

namespace fs = std::filesystem;
using namespace pbd;

namespace {

void check_device() {
    const char* dev = std::getenv("PBD_DEVICE");
    if (dev && std::string(dev) != "cpu")
        throw Error(std::string("PBD_DEVICE=") + dev + " is not supported; only cpu is");
}

RunConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return RunConfig{};
    return load_run_config(path);
}

int cmd_generate(const std::string& config, const std::string& out) {
    RunConfig cfg = load_config_or_default(config);
    DatasetSummary s = make_dataset(cfg.dataset, out);
    std::cout << "dataset written to " << s.dir << "\n"
              << "train: " << s.train << " (" << s.train_pure << " pure)\n"
              << "test: regular " << s.test_regular << ", difficult " << s.test_difficult
              << ", tough " << s.test_tough << "\n";
    return 0;
}

int cmd_train(const std::string& config, const std::string& data, const std::string& out,
              const std::string& curve) {
    RunConfig cfg = load_config_or_default(config);
    auto samples = load_training_set(data);
    EndpointNet net(cfg.model);
    TrainResult res = train_model(net, samples, cfg.train, &std::cout);
    save_checkpoint(net, out);
    std::cout << "checkpoint written to " << out << " after " << res.iterations
              << " iterations\n";
    if (!curve.empty()) {
        std::ofstream f(curve);
        require(bool(f), "cannot open loss-curve file: " + curve);
        f.precision(17);
        for (double l : res.iter_loss) f << l << "\n";
        std::cout << "loss curve written to " << curve << "\n";
    }
    return 0;
}

int cmd_evaluate(const std::string& config, const std::string& ckpt, const std::string& data,
                 const std::string& mode, const std::string& records) {
    RunConfig cfg = load_config_or_default(config);
    if (!mode.empty()) cfg.eval.mode = metric_mode_from_string(mode);
    EndpointNet net = load_checkpoint(ckpt);
    EvalOutcome out = evaluate_model(net, data, cfg.eval);
    std::cout << format_report(out);
    if (!records.empty()) {
        std::ofstream f(records);
        require(bool(f), "cannot open records file: " + records);
        write_report_records(out, f);
        std::cout << "records written to " << records << "\n";
    }
    return 0;
}

int cmd_dedup(const std::string& config, const std::string& ckpt, const std::string& data,
              const std::string& manifest, double threshold, const std::string& out) {
    RunConfig cfg = load_config_or_default(config);
    EndpointNet net = load_checkpoint(ckpt);
    auto samples = load_split(data, manifest);
    require(!samples.empty(), "dedup: empty manifest");
    std::vector<DedupInput> inputs;
    for (const auto& s : samples) {
        Tensor img = prompt_at(s, cfg.eval.input);
        inputs.push_back({s.ann.image_id, embed_image(net, img)});
    }
    DedupResult res = dedup_features(inputs, threshold);
    std::ostream* sink = &std::cout;
    std::ofstream f;
    if (!out.empty()) {
        f.open(out);
        require(bool(f), "cannot open output file: " + out);
        sink = &f;
    }
    for (size_t c = 0; c < res.clusters.size(); ++c) {
        json members = json::array();
        for (int i : res.clusters[c]) members.push_back(inputs[i].image_id);
        (*sink) << json{{"representative", inputs[res.representatives[c]].image_id},
                        {"members", members}}
                       .dump()
                << "\n";
    }
    std::cout << inputs.size() << " images -> " << res.clusters.size() << " clusters\n";
    return 0;
}

int cmd_fuse(const std::vector<std::string>& inputs, const std::string& out, double eps,
             const std::string& rule_str) {
    require(!inputs.empty(), "fuse: at least one manifest required");
    CountRule rule = count_rule_from_string(rule_str);
    // one manifest per annotator; group by image_id across them
    std::map<std::string, std::vector<EndpointAnnotation>> by_image;
    std::vector<std::string> order;  // first-seen order for stable output
    for (const auto& path : inputs)
        for (auto& a : read_manifest(path)) {
            if (!by_image.count(a.image_id)) order.push_back(a.image_id);
            by_image[a.image_id].push_back(std::move(a));
        }
    std::vector<EndpointAnnotation> fused;
    int consistent = 0, voted = 0, single = 0;
    for (const auto& id : order) {
        AnnotationBundle b = fuse_annotations(by_image.at(id), eps, rule);
        consistent += b.consistent;
        voted += b.vote_resolved;
        single += b.single;
        fused.push_back(*b.fused);
    }
    write_manifest(out, fused);
    std::cout << "fused " << fused.size() << " images to " << out << " (" << consistent
              << " averaged, " << voted << " voted, " << single << " single)\n";
    return 0;
}

int cmd_report(const std::string& ckpt, const std::string& records) {
    require(!ckpt.empty() || !records.empty(), "report: pass --ckpt and/or --records");
    if (!ckpt.empty()) {
        EndpointNet net = load_checkpoint(ckpt);
        std::cout << checkpoint_summary(net);
    }
    if (!records.empty()) {
        std::ifstream f(records);
        require(bool(f), "cannot open records file: " + records);
        std::cout << format_report(read_report_records(f));
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"endpoint detection for stacked-plate X-ray images"};
    app.require_subcommand(1);

    std::string config, data, out, ckpt, curve, records, mode, manifest = "train.jsonl";
    std::string rule = "all";
    std::vector<std::string> fuse_inputs;
    double threshold = 1.0, eps = 3.5;

    auto* generate = app.add_subcommand("generate", "render a synthetic dataset");
    generate->add_option("--config", config, "run configuration (JSON)");
    generate->add_option("--out", out, "output directory")->required();

    auto* train = app.add_subcommand("train", "train a model on a generated dataset");
    train->add_option("--config", config, "run configuration (JSON)");
    train->add_option("--data", data, "dataset directory")->required();
    train->add_option("--out", out, "checkpoint path")->required();
    train->add_option("--curve", curve, "write per-iteration losses here");

    auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on the test splits");
    evaluate->add_option("--config", config, "run configuration (JSON)");
    evaluate->add_option("--ckpt", ckpt, "checkpoint path")->required();
    evaluate->add_option("--data", data, "dataset directory")->required();
    evaluate->add_option("--mode", mode, "pixel or paper (overrides config)");
    evaluate->add_option("--records", records, "write machine-readable records here");

    auto* dedup = app.add_subcommand("dedup", "cluster near-duplicate images");
    dedup->add_option("--config", config, "run configuration (JSON)");
    dedup->add_option("--ckpt", ckpt, "checkpoint path")->required();
    dedup->add_option("--data", data, "dataset directory")->required();
    dedup->add_option("--manifest", manifest, "manifest file inside the dataset");
    dedup->add_option("--threshold", threshold, "feature-distance threshold")->required();
    dedup->add_option("--out", out, "write cluster records here instead of stdout");

    auto* fuse = app.add_subcommand("fuse", "fuse multi-annotator manifests");
    fuse->add_option("--inputs", fuse_inputs, "one manifest per annotator")->required();
    fuse->add_option("--out", out, "fused manifest path")->required();
    fuse->add_option("--eps", eps, "max paired point deviation in px");
    fuse->add_option("--rule", rule, "count agreement: all or majority");

    auto* report = app.add_subcommand("report", "render checkpoint or evaluation records");
    report->add_option("--ckpt", ckpt, "checkpoint to summarize");
    report->add_option("--records", records, "evaluation records to render as a table");

    CLI11_PARSE(app, argc, argv);

    try {
        check_device();
        if (generate->parsed()) return cmd_generate(config, out);
        if (train->parsed()) return cmd_train(config, data, out, curve);
        if (evaluate->parsed()) return cmd_evaluate(config, ckpt, data, mode, records);
        if (dedup->parsed()) return cmd_dedup(config, ckpt, data, manifest, threshold, out);
        if (fuse->parsed()) return cmd_fuse(fuse_inputs, out, eps, rule);
        if (report->parsed()) return cmd_report(ckpt, records);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
