#include "rafa/record.hpp"

#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace rafa {

using nlohmann::json;

double RunRecord::cumulative_regret_at(std::int64_t t) const {
    if (t < 1 || t > static_cast<std::int64_t>(steps.size())) {
        throw std::out_of_range("cumulative regret queried outside the run");
    }
    return steps[static_cast<std::size_t>(t) - 1].cum_regret;
}

std::string RunRecord::steps_jsonl() const {
    std::ostringstream out;
    for (const StepRecord& s : steps) {
        json line;
        line["t"] = s.t;
        line["state"] = s.state;
        line["action"] = s.action;
        line["reward"] = s.reward;
        line["entropy"] = s.entropy;
        line["epoch"] = s.epoch;
        line["inst_regret"] = s.inst_regret;
        line["cum_regret"] = s.cum_regret;
        out << line.dump() << "\n";
    }
    return out.str();
}

std::string RunRecord::meta_json() const {
    json j;
    j["kind"] = "run_record_meta";
    j["version"] = 1;
    j["seed"] = seed;
    j["variant"] = variant;
    j["planner"] = planner;
    j["switch_kind"] = switch_kind;
    j["epsilon"] = epsilon;
    j["value_bound"] = value_bound;
    j["lambda"] = lambda;
    j["sigma"] = sigma;
    j["horizon"] = horizon;
    j["feature_dim"] = feature_dim;
    j["learned_reward"] = learned_reward;
    j["reward_estimate_final"] = reward_estimate_final;
    j["entropy_initial"] = entropy_initial;
    j["entropy_final"] = entropy_final;
    j["feature_bound_env"] = feature_bound_env;
    j["max_feature_norm"] = max_feature_norm;
    j["switch_disagreements"] = switch_disagreements;
    j["cum_regret"] = cumulative_regret();
    j["epoch_count"] = epoch_count();

    json gains = json::array();
    json next_states = json::array();
    for (const StepRecord& s : steps) {
        gains.push_back(s.info_gain);
        next_states.push_back(s.next_state);
    }
    j["step_info_gain"] = std::move(gains);
    j["step_next_state"] = std::move(next_states);

    json eps = json::array();
    for (const EpochSummary& e : epochs) {
        json je;
        je["k"] = e.k;
        je["t_start"] = e.t_start;
        je["entropy_at_start"] = e.entropy_at_start;
        je["logdet_at_start"] = e.logdet_at_start;
        je["certificate"] = e.certificate;
        je["horizon_used"] = e.horizon_used;
        je["nodes_expanded"] = e.nodes_expanded;
        je["planner_id"] = e.planner_id;
        je["min_reward_margin"] = e.min_reward_margin;
        je["gains_open"] = e.gains_open;
        je["gains_close"] = e.gains_close;
        je["pi"] = e.pi;
        je["value"] = e.value;
        eps.push_back(std::move(je));
    }
    j["epochs"] = std::move(eps);
    return j.dump();
}

RunRecord RunRecord::from_files(const std::string& steps_text, const std::string& meta_text) {
    RunRecord rec;
    json meta = json::parse(meta_text);
    if (meta.value("kind", "") != "run_record_meta") {
        throw std::invalid_argument("not a run record meta file");
    }
    rec.seed = meta.at("seed").get<std::uint64_t>();
    rec.variant = meta.at("variant").get<std::string>();
    rec.planner = meta.at("planner").get<std::string>();
    rec.switch_kind = meta.at("switch_kind").get<std::string>();
    rec.epsilon = meta.at("epsilon").get<double>();
    rec.value_bound = meta.at("value_bound").get<double>();
    rec.lambda = meta.at("lambda").get<double>();
    rec.sigma = meta.at("sigma").get<double>();
    rec.horizon = meta.at("horizon").get<std::int64_t>();
    rec.feature_dim = meta.at("feature_dim").get<int>();
    rec.learned_reward = meta.at("learned_reward").get<bool>();
    rec.reward_estimate_final = meta.at("reward_estimate_final").get<std::vector<double>>();
    rec.entropy_initial = meta.at("entropy_initial").get<double>();
    rec.entropy_final = meta.at("entropy_final").get<double>();
    rec.feature_bound_env = meta.at("feature_bound_env").get<double>();
    rec.max_feature_norm = meta.at("max_feature_norm").get<double>();
    rec.switch_disagreements = meta.at("switch_disagreements").get<std::int64_t>();

    const auto gains = meta.at("step_info_gain").get<std::vector<double>>();
    const auto next_states = meta.at("step_next_state").get<std::vector<int>>();

    std::istringstream in(steps_text);
    std::string line;
    std::size_t idx = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json js = json::parse(line);
        StepRecord s;
        s.t = js.at("t").get<std::int64_t>();
        s.state = js.at("state").get<int>();
        s.action = js.at("action").get<int>();
        s.reward = js.at("reward").get<double>();
        s.entropy = js.at("entropy").get<double>();
        s.epoch = js.at("epoch").get<int>();
        s.inst_regret = js.at("inst_regret").get<double>();
        s.cum_regret = js.at("cum_regret").get<double>();
        if (idx < gains.size()) s.info_gain = gains[idx];
        if (idx < next_states.size()) s.next_state = next_states[idx];
        rec.steps.push_back(s);
        ++idx;
    }

    for (const json& je : meta.at("epochs")) {
        EpochSummary e;
        e.k = je.at("k").get<int>();
        e.t_start = je.at("t_start").get<std::int64_t>();
        e.entropy_at_start = je.at("entropy_at_start").get<double>();
        e.logdet_at_start = je.at("logdet_at_start").get<double>();
        e.certificate = je.at("certificate").get<double>();
        e.horizon_used = je.at("horizon_used").get<int>();
        e.nodes_expanded = je.at("nodes_expanded").get<long>();
        e.planner_id = je.at("planner_id").get<std::string>();
        e.min_reward_margin = je.at("min_reward_margin").get<double>();
        e.gains_open = je.at("gains_open").get<std::vector<double>>();
        e.gains_close = je.at("gains_close").get<std::vector<double>>();
        e.pi = je.at("pi").get<Policy>();
        e.value = je.at("value").get<std::vector<double>>();
        rec.epochs.push_back(std::move(e));
    }
    return rec;
}

} // namespace rafa
