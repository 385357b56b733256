#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "gacd/analysis.hpp"
#include "gacd/config.hpp"
#include "gacd/data.hpp"
#include "gacd/distill.hpp"
#include "gacd/finetune_eval.hpp"
#include "gacd/runlog.hpp"

namespace fs = std::filesystem;
using namespace gacd;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string run_id;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
    auto* opt = cmd->add_option("-c,--config", args.config_path, "experiment config (JSON)");
    if (config_required) opt->required();
    cmd->add_option("--set", args.overrides, "dotted-path override, e.g. --set distill.epochs=2");
    cmd->add_option("--run-id", args.run_id, "label for result records");
}

ExperimentConfig load_config(const CommonArgs& args) {
    ExperimentConfig cfg = args.config_path.empty() ? ExperimentConfig()
                                                    : ExperimentConfig::from_file(args.config_path);
    for (const std::string& ov : args.overrides) cfg.apply_override(ov);
    return cfg;
}

std::string default_run_id(const CommonArgs& args, const ExperimentConfig& cfg,
                           const std::string& stage) {
    if (!args.run_id.empty()) return args.run_id;
    return stage + "-" + config_hash_hex(cfg.hash()).substr(8);
}

std::string records_path(const ExperimentConfig& cfg) {
    return (fs::path(cfg.output_dir()) / "records.jsonl").string();
}

Dataset load_primary_dataset(const ExperimentConfig& cfg) {
    return ingest_dataset(cfg.dataset_name(), cfg.dataset_path());
}

Classifier load_teacher(const ExperimentConfig& cfg) {
    const std::string path = cfg.teacher_checkpoint();
    if (path.empty())
        throw std::runtime_error("config is missing teacher.checkpoint");
    if (!fs::exists(path)) throw std::runtime_error("teacher checkpoint not found: " + path);
    return Classifier::load_file(path);
}

// Model files are either classifier checkpoints or distill states; both
// carry a backbone.
nn::Backbone load_backbone_any(const std::string& path) {
    if (!fs::exists(path)) throw std::runtime_error("checkpoint not found: " + path);
    try {
        return Classifier::load_file(path).backbone();
    } catch (const std::runtime_error&) {
        return DistillState::load(path)->student;
    }
}

void emit_record(const ExperimentConfig& cfg, const std::string& run_id, const std::string& stage,
                 nlohmann::json metrics) {
    ResultRecord rec;
    rec.run_id = run_id;
    rec.config_hash = cfg.hash();
    rec.stage = stage;
    rec.metrics = std::move(metrics);
    rec.timestamp = utc_timestamp();
    append_record(records_path(cfg), rec);
}

nlohmann::json report_metrics(const EvalReport& rep, int num_classes) {
    nlohmann::json m = {{"natural_pct", rep.natural_pct},
                        {"dataset", rep.dataset_id},
                        {"model", rep.model_id},
                        {"num_classes", num_classes}};
    if (rep.has_adversarial) {
        m["adversarial_pct"] = rep.adversarial_pct;
        m["attack"] = rep.attack_desc;
    }
    return m;
}

DistillConfig distill_config_of(const ExperimentConfig& cfg, const Dataset& data) {
    DistillConfig d;
    const auto section = cfg.distill_section();
    d.epochs = section.epochs;
    d.batch_size = section.batch_size;
    d.sgd = section.sgd;
    const CriticConfig critic = cfg.critic(data.train.size());
    d.negatives = critic.negatives;
    d.temperature = critic.temperature;
    d.logit_clamp = critic.logit_clamp;
    d.bank_momentum = cfg.bank_momentum();
    d.embed_dim = cfg.embed_dim();
    d.reweighting = cfg.reweighting();
    d.teacher_head_lr_scale = cfg.teacher_head_lr_scale();
    d.head_warmstart = cfg.head_warmstart();
    d.seed = cfg.seed();
    d.scatter = cfg.scatter_budget();
    d.ot = cfg.ot();
    return d;
}

int run_distill(const CommonArgs& args, bool resume) {
    ExperimentConfig cfg = load_config(args);
    Dataset data = load_primary_dataset(cfg);
    DistillConfig dcfg = distill_config_of(cfg, data);
    dcfg.validate(data.train.size());
    const std::string run_id = default_run_id(args, cfg, "distill");
    const std::string ckpt = (fs::path(cfg.output_dir()) / "distill_latest.ckpt").string();

    std::unique_ptr<DistillState> state;
    if (resume && fs::exists(ckpt)) {
        uint64_t saved_hash = 0;
        state = DistillState::load(ckpt, &saved_hash);
        if (saved_hash != cfg.hash())
            throw std::runtime_error("checkpoint config hash does not match this config");
        std::cout << "resuming from epoch " << state->next_epoch << "\n";
    } else {
        Classifier teacher = load_teacher(cfg);
        state = distill_init(teacher, cfg.student_arch(), data, dcfg);
    }

    std::cout << "train split checksum " << config_hash_hex(data.train.checksum) << ", test "
              << config_hash_hex(data.test.checksum) << "\n";

    DistillRunResult result =
        distill_train(*state, data, dcfg, cfg.output_dir(), cfg.hash(),
                      [&](const DistillEpochRecord& rec) {
                          std::cout << "epoch " << rec.epoch << "  -objective "
                                    << rec.mean_neg_objective << "  mi-bound " << rec.mi_bound
                                    << "  (" << rec.wall_seconds << "s)\n";
                          emit_record(cfg, run_id, "distill",
                                      {{"epoch", rec.epoch},
                                       {"mean_neg_objective", rec.mean_neg_objective},
                                       {"mi_bound", rec.mi_bound},
                                       {"wall_seconds", rec.wall_seconds},
                                       {"num_classes", data.num_classes}});
                      });
    std::cout << "teacher natural accuracy: " << result.teacher_natural_pct << "%\n";
    std::cout << "distilled state -> " << ckpt << "\n";
    return 0;
}

int run_kd(const CommonArgs& args) {
    ExperimentConfig cfg = load_config(args);
    Dataset data = load_primary_dataset(cfg);
    Classifier teacher = load_teacher(cfg);
    KdConfig kcfg;
    const auto section = cfg.kd_section();
    kcfg.epochs = section.epochs;
    kcfg.batch_size = section.batch_size;
    kcfg.sgd = section.sgd;
    kcfg.temperature = cfg.kd_temperature();
    kcfg.hard_label_weight = cfg.kd_hard_label_weight();
    kcfg.seed = cfg.seed();

    const std::string run_id = default_run_id(args, cfg, "kd");
    std::vector<KdEpochRecord> log;
    Classifier student = kd_baseline_train(teacher, cfg.student_arch(), data, kcfg, &log);
    for (const KdEpochRecord& rec : log)
        emit_record(cfg, run_id, "distill",
                    {{"epoch", rec.epoch}, {"kd_loss", rec.mean_loss},
                     {"num_classes", data.num_classes}});

    const std::string out = (fs::path(cfg.output_dir()) / "kd_student.ckpt").string();
    student.save_file(out, cfg.hash());
    std::cout << "kd student -> " << out << "\n";
    return 0;
}

int run_finetune(const CommonArgs& args, const std::string& from, bool scratch,
                 const std::string& out_name) {
    ExperimentConfig cfg = load_config(args);
    Dataset data = load_primary_dataset(cfg);
    FinetuneConfig fcfg;
    const auto section = cfg.finetune_section();
    fcfg.epochs = section.epochs;
    fcfg.batch_size = section.batch_size;
    fcfg.sgd = section.sgd;
    fcfg.attack = cfg.finetune_budget();
    fcfg.epsilon_warmup_epochs = cfg.finetune_epsilon_warmup();
    fcfg.seed = cfg.seed();

    nn::Backbone backbone =
        scratch ? nn::Backbone::make(cfg.student_arch(), data.shape, splitmix64(cfg.seed()))
                : load_backbone_any(from.empty()
                                        ? (fs::path(cfg.output_dir()) / "distill_latest.ckpt")
                                              .string()
                                        : from);

    const std::string run_id = default_run_id(args, cfg, "finetune");
    std::vector<FinetuneEpochRecord> log;
    Classifier tuned = adversarial_finetune(backbone, data.num_classes, data, fcfg, &log);
    for (const FinetuneEpochRecord& rec : log)
        emit_record(cfg, run_id, "finetune",
                    {{"epoch", rec.epoch}, {"adv_train_loss", rec.mean_loss},
                     {"num_classes", data.num_classes}});

    const std::string out = (fs::path(cfg.output_dir()) / out_name).string();
    tuned.save_file(out, cfg.hash());
    std::cout << "finetuned classifier -> " << out << "\n";
    return 0;
}

int run_eval(const CommonArgs& args, const std::string& model_path, bool no_attack) {
    ExperimentConfig cfg = load_config(args);
    Dataset data = load_primary_dataset(cfg);
    if (!fs::exists(model_path)) throw std::runtime_error("checkpoint not found: " + model_path);
    Classifier model = Classifier::load_file(model_path);

    std::optional<AttackBudget> budget;
    if (!no_attack) budget = cfg.eval_budget();
    const std::string run_id = default_run_id(args, cfg, "eval");
    EvalReport rep = evaluate(model, data, data.test, budget, cfg.seed(),
                              fs::path(model_path).filename().string());
    emit_record(cfg, run_id, "eval", report_metrics(rep, data.num_classes));
    std::cout << "natural " << rep.natural_pct << "%";
    if (rep.has_adversarial)
        std::cout << "  adversarial " << rep.adversarial_pct << "% (" << rep.attack_desc << ")";
    std::cout << "\n";
    return 0;
}

int run_transfer(const CommonArgs& args, const std::string& model_path) {
    ExperimentConfig cfg = load_config(args);
    Dataset transfer = ingest_dataset(cfg.transfer_name(), cfg.transfer_path());
    nn::Backbone backbone = load_backbone_any(model_path);

    ProbeConfig pcfg;
    const auto section = cfg.probe_section();
    pcfg.epochs = section.epochs;
    pcfg.batch_size = section.batch_size;
    pcfg.sgd = section.sgd;
    pcfg.attack = cfg.probe_budget();
    pcfg.seed = cfg.seed();

    const std::string run_id = default_run_id(args, cfg, "transfer");
    EvalReport rep =
        linear_probe_transfer(backbone, transfer, pcfg, fs::path(model_path).filename().string());
    emit_record(cfg, run_id, "transfer", report_metrics(rep, transfer.num_classes));
    std::cout << "probe natural " << rep.natural_pct << "%  adversarial " << rep.adversarial_pct
              << "% (" << rep.attack_desc << ")\n";
    return 0;
}

int run_analyze(const CommonArgs& args, const std::string& model_path) {
    ExperimentConfig cfg = load_config(args);
    Dataset data = load_primary_dataset(cfg);
    Classifier teacher = load_teacher(cfg);
    if (!fs::exists(model_path)) throw std::runtime_error("checkpoint not found: " + model_path);
    Classifier student = Classifier::load_file(model_path);
    const std::string run_id = default_run_id(args, cfg, "analyze");
    const fs::path outdir(cfg.output_dir());
    const std::string tag = fs::path(model_path).stem().string();

    // Correlation structure on natural and attacked inputs.
    const AttackBudget budget = cfg.eval_budget();
    CorrelationMatrix t_nat = logits_correlation(teacher, data, data.test);
    CorrelationMatrix s_nat = logits_correlation(student, data, data.test);
    CorrelationMatrix t_adv = logits_correlation(teacher, data, data.test, budget, cfg.seed());
    CorrelationMatrix s_adv = logits_correlation(student, data, data.test, budget, cfg.seed());
    const CorrelationDiff nat = correlation_difference(t_nat, s_nat);
    const CorrelationDiff adv = correlation_difference(t_adv, s_adv);
    save_correlation((outdir / ("corr_teacher_nat.tsv")).string(), t_nat, cfg.hash());
    save_correlation((outdir / ("corr_" + tag + "_nat.tsv")).string(), s_nat, cfg.hash());
    save_correlation((outdir / ("corr_teacher_adv.tsv")).string(), t_adv, cfg.hash());
    save_correlation((outdir / ("corr_" + tag + "_adv.tsv")).string(), s_adv, cfg.hash());

    // Feature dump in the two-class + attacked-class scheme.
    const int class_a = cfg.doc().contains("analyze")
                            ? cfg.doc()["analyze"].value("class_a", 0)
                            : 0;
    const int class_b = cfg.doc().contains("analyze")
                            ? cfg.doc()["analyze"].value("class_b", 1)
                            : 1;
    const int count = cfg.doc().contains("analyze") ? cfg.doc()["analyze"].value("count", 100) : 100;
    std::vector<ExportGroup> groups = {{class_a, count, false, 0},
                                       {class_b, count, false, 0},
                                       {class_b, count, true, class_a}};
    const std::string dump = (outdir / ("features_" + tag + ".tsv")).string();
    ExportStats stats = export_features(student, data, groups, budget, cfg.seed(), dump, cfg.hash());

    emit_record(cfg, run_id, "analyze",
                {{"corr_diff_natural", nat.mean_off_diagonal},
                 {"corr_diff_adversarial", adv.mean_off_diagonal},
                 {"feature_rows", stats.rows},
                 {"attack_failures", stats.attack_failures},
                 {"num_classes", data.num_classes},
                 {"model", tag}});
    std::cout << "corr-diff natural " << nat.mean_off_diagonal << "  adversarial "
              << adv.mean_off_diagonal << "\nfeatures -> " << dump << " (" << stats.rows
              << " rows)\n";
    return 0;
}

int run_report(const std::vector<std::string>& paths) {
    std::vector<ResultRecord> all;
    for (const std::string& p : paths) {
        const fs::path path = fs::is_directory(p) ? fs::path(p) / "records.jsonl" : fs::path(p);
        for (ResultRecord& r : read_records(path.string()))
            if (r.stage == "eval" || r.stage == "transfer") all.push_back(std::move(r));
    }
    std::cout << render_report(all);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Guided adversarial contrastive distillation experiment runner"};
    app.require_subcommand(1);

    CommonArgs distill_args, kd_args, ft_args, eval_args, transfer_args, analyze_args;
    bool resume = false;
    auto* distill_cmd = app.add_subcommand("distill", "contrastive distillation from a teacher");
    add_common(distill_cmd, distill_args);
    distill_cmd->add_flag("--resume", resume, "continue from distill_latest.ckpt");

    auto* kd_cmd = app.add_subcommand("kd-baseline", "soft-label distillation baseline");
    add_common(kd_cmd, kd_args);

    std::string ft_from;
    std::string ft_out = "finetuned.ckpt";
    bool ft_scratch = false;
    auto* ft_cmd = app.add_subcommand("finetune", "adversarial fine-tuning (Madry protocol)");
    add_common(ft_cmd, ft_args);
    ft_cmd->add_option("--from", ft_from, "distilled checkpoint (default: output_dir/distill_latest.ckpt)");
    ft_cmd->add_flag("--scratch", ft_scratch, "train from a fresh backbone instead");
    ft_cmd->add_option("--out", ft_out, "output filename inside output_dir");

    std::string eval_model;
    bool eval_no_attack = false;
    auto* eval_cmd = app.add_subcommand("eval", "natural + adversarial accuracy");
    add_common(eval_cmd, eval_args);
    eval_cmd->add_option("--model", eval_model, "classifier checkpoint")->required();
    eval_cmd->add_flag("--no-attack", eval_no_attack, "natural accuracy only");

    std::string transfer_model;
    auto* transfer_cmd = app.add_subcommand("transfer", "frozen-backbone linear probe");
    add_common(transfer_cmd, transfer_args);
    transfer_cmd->add_option("--model", transfer_model, "checkpoint with the backbone")->required();

    std::string analyze_model;
    auto* analyze_cmd = app.add_subcommand("analyze", "correlation diffs + feature export");
    add_common(analyze_cmd, analyze_args);
    analyze_cmd->add_option("--model", analyze_model, "student classifier checkpoint")->required();

    std::vector<std::string> report_paths;
    auto* report_cmd = app.add_subcommand("report", "render Nat./Adv. table from records");
    report_cmd->add_option("records", report_paths, "records.jsonl files or run directories")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (distill_cmd->parsed()) return run_distill(distill_args, resume);
        if (kd_cmd->parsed()) return run_kd(kd_args);
        if (ft_cmd->parsed()) return run_finetune(ft_args, ft_from, ft_scratch, ft_out);
        if (eval_cmd->parsed()) return run_eval(eval_args, eval_model, eval_no_attack);
        if (transfer_cmd->parsed()) return run_transfer(transfer_args, transfer_model);
        if (analyze_cmd->parsed()) return run_analyze(analyze_args, analyze_model);
        if (report_cmd->parsed()) return run_report(report_paths);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
