#include "dpt/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dpt/rng.hpp"

namespace dpt {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void fail(std::size_t line_no, const std::string& what) {
    throw std::runtime_error("config line " + std::to_string(line_no) + ": " + what);
}

long long parse_int(const std::string& v, std::size_t line_no) {
    try {
        std::size_t pos = 0;
        const long long out = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return out;
    } catch (...) {
        fail(line_no, "expected an integer, got '" + v + "'");
    }
}

double parse_double(const std::string& v, std::size_t line_no) {
    try {
        std::size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return out;
    } catch (...) {
        fail(line_no, "expected a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& v, std::size_t line_no) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail(line_no, "expected a boolean, got '" + v + "'");
}

std::vector<std::string> parse_list(const std::string& v) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

bool stage_common_key(StageConfig& st, const std::string& key, const std::string& value,
                      std::size_t line_no) {
    if (key == "epochs") {
        st.epochs = static_cast<int>(parse_int(value, line_no));
    } else if (key == "batch") {
        st.batch = static_cast<std::size_t>(parse_int(value, line_no));
    } else if (key == "learning_rate") {
        st.learning_rate = parse_double(value, line_no);
    } else if (key == "weight_decay") {
        st.weight_decay = parse_double(value, line_no);
    } else {
        return false;
    }
    return true;
}

} // namespace

RunConfig parse_config(std::istream& in) {
    RunConfig cfg;
    std::string section;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string text = trim(line);
        if (text.empty() || text[0] == '#' || text[0] == ';') continue;
        if (text.front() == '[') {
            if (text.back() != ']') fail(line_no, "unterminated section header");
            section = trim(text.substr(1, text.size() - 2));
            static const char* known[] = {"data",   "model", "stage1", "stage2",
                                          "stage3", "eval",  "synth",  "run"};
            if (std::find_if(std::begin(known), std::end(known), [&](const char* s) {
                    return section == s;
                }) == std::end(known)) {
                fail(line_no, "unknown section '" + section + "'");
            }
            if (section == "synth") cfg.has_synth = true;
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos) fail(line_no, "expected 'key = value'");
        const std::string key = trim(text.substr(0, eq));
        const std::string value = trim(text.substr(eq + 1));
        if (section.empty()) fail(line_no, "key outside any section");
        const std::string qualified = section + "." + key;

        if (section == "data") {
            if (key == "path") cfg.data_path = value;
            else if (key == "behaviors") cfg.behaviors = parse_list(value);
            else if (key == "min_target") cfg.min_target = static_cast<int>(parse_int(value, line_no));
            else fail(line_no, "unknown key '" + qualified + "'");
        } else if (section == "model") {
            if (key == "layers") cfg.encoder.layers = static_cast<int>(parse_int(value, line_no));
            else if (key == "dim") cfg.encoder.dim = static_cast<int>(parse_int(value, line_no));
            else if (key == "keep_prob") cfg.encoder.keep_prob = parse_double(value, line_no);
            else if (key == "include_layer0") cfg.encoder.include_layer0 = parse_bool(value, line_no);
            else if (key == "relation_top_k") cfg.relation_top_k = static_cast<int>(parse_int(value, line_no));
            else if (key == "item_all_pairs") cfg.item_all_pairs = parse_bool(value, line_no);
            else fail(line_no, "unknown key '" + qualified + "'");
        } else if (section == "stage1") {
            if (stage_common_key(cfg.stage1, key, value, line_no)) {
            } else if (key == "lambda_rec") {
                cfg.stage1.lambda_rec = parse_double(value, line_no);
            } else if (key == "delta") {
                cfg.stage1.delta = parse_double(value, line_no);
            } else if (key == "recon_negatives") {
                cfg.stage1.recon_neg_ratio = parse_double(value, line_no);
            } else {
                fail(line_no, "unknown key '" + qualified + "'");
            }
        } else if (section == "stage2") {
            if (!stage_common_key(cfg.stage2, key, value, line_no)) {
                fail(line_no, "unknown key '" + qualified + "'");
            }
        } else if (section == "stage3") {
            if (stage_common_key(cfg.stage3, key, value, line_no)) {
            } else if (key == "prompt_variant") {
                try {
                    cfg.stage3.prompt_variant = parse_prompt_variant(value);
                } catch (const std::exception& e) {
                    fail(line_no, e.what());
                }
            } else {
                fail(line_no, "unknown key '" + qualified + "'");
            }
        } else if (section == "eval") {
            if (key == "mode") {
                if (value != "full" && value != "sampled") {
                    fail(line_no, "eval.mode must be 'full' or 'sampled'");
                }
                cfg.eval.mode = value;
            } else if (key == "k") {
                cfg.eval.k = static_cast<int>(parse_int(value, line_no));
            } else if (key == "negatives") {
                cfg.eval.negatives = static_cast<int>(parse_int(value, line_no));
            } else {
                fail(line_no, "unknown key '" + qualified + "'");
            }
        } else if (section == "synth") {
            if (key == "users") cfg.synth.num_users = static_cast<int>(parse_int(value, line_no));
            else if (key == "items") cfg.synth.num_items = static_cast<int>(parse_int(value, line_no));
            else if (key == "behaviors") cfg.synth.num_behaviors = static_cast<int>(parse_int(value, line_no));
            else if (key == "blocks") cfg.synth.blocks = static_cast<int>(parse_int(value, line_no));
            else if (key == "aux_density") cfg.synth.aux_density = parse_double(value, line_no);
            else if (key == "target_density") cfg.synth.target_density = parse_double(value, line_no);
            else if (key == "noise_rate") cfg.synth.noise_rate = parse_double(value, line_no);
            else fail(line_no, "unknown key '" + qualified + "'");
        } else if (section == "run") {
            if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(value, line_no));
            else if (key == "out") cfg.out_dir = value;
            else if (key == "threads") cfg.threads = static_cast<int>(parse_int(value, line_no));
            else fail(line_no, "unknown key '" + qualified + "'");
        }
    }

    if (cfg.has_synth) {
        if (cfg.behaviors.empty()) {
            for (int b = 0; b + 1 < cfg.synth.num_behaviors; ++b) {
                cfg.behaviors.push_back("aux" + std::to_string(b + 1));
            }
            cfg.behaviors.push_back("target");
        } else if (static_cast<int>(cfg.behaviors.size()) != cfg.synth.num_behaviors) {
            throw std::runtime_error(
                "config: data.behaviors lists " + std::to_string(cfg.behaviors.size()) +
                " labels but synth.behaviors = " + std::to_string(cfg.synth.num_behaviors));
        }
        cfg.synth.behavior_labels = cfg.behaviors;
    }
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    return parse_config(in);
}

std::string RunConfig::canonical() const {
    std::vector<std::string> lines;
    auto put = [&](const std::string& key, const std::string& value) {
        lines.push_back(key + "=" + value);
    };
    std::string joined;
    for (std::size_t i = 0; i < behaviors.size(); ++i) {
        if (i) joined += ",";
        joined += behaviors[i];
    }
    put("data.behaviors", joined);
    put("data.min_target", std::to_string(min_target));
    put("data.path", data_path);
    put("model.dim", std::to_string(encoder.dim));
    put("model.include_layer0", encoder.include_layer0 ? "true" : "false");
    put("model.item_all_pairs", item_all_pairs ? "true" : "false");
    put("model.keep_prob", fmt(encoder.keep_prob));
    put("model.layers", std::to_string(encoder.layers));
    put("model.relation_top_k", std::to_string(relation_top_k));
    const StageConfig* stages[] = {&stage1, &stage2, &stage3};
    for (int s = 0; s < 3; ++s) {
        const std::string pre = "stage" + std::to_string(s + 1) + ".";
        put(pre + "batch", std::to_string(stages[s]->batch));
        put(pre + "epochs", std::to_string(stages[s]->epochs));
        put(pre + "learning_rate", fmt(stages[s]->learning_rate));
        put(pre + "weight_decay", fmt(stages[s]->weight_decay));
    }
    put("stage1.delta", fmt(stage1.delta));
    put("stage1.lambda_rec", fmt(stage1.lambda_rec));
    put("stage1.recon_negatives", fmt(stage1.recon_neg_ratio));
    if (has_synth) {
        put("synth.aux_density", fmt(synth.aux_density));
        put("synth.behaviors", std::to_string(synth.num_behaviors));
        put("synth.blocks", std::to_string(synth.blocks));
        put("synth.items", std::to_string(synth.num_items));
        put("synth.noise_rate", fmt(synth.noise_rate));
        put("synth.target_density", fmt(synth.target_density));
        put("synth.users", std::to_string(synth.num_users));
    }
    std::sort(lines.begin(), lines.end());
    std::string out;
    for (const auto& l : lines) {
        out += l;
        out += '\n';
    }
    return out;
}

std::uint64_t RunConfig::hash() const { return fnv1a64(canonical()); }

} // namespace dpt
