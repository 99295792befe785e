#include "votemarl/model_io.hpp"

#include "votemarl/errors.hpp"

#include <fstream>
#include <sstream>

namespace votemarl {

namespace {

std::size_t positive_count(const nlohmann::json& doc, const char* key)
{
    if (!doc.contains(key) || !doc[key].is_number_integer())
        throw ValidationError(std::string("model file: missing integer field \"") + key + "\"");
    const auto value = doc[key].get<long long>();
    if (value <= 0)
        throw ValidationError(std::string("model file: \"") + key + "\" must be positive");
    return static_cast<std::size_t>(value);
}

const nlohmann::json& array_of(const nlohmann::json& node, std::size_t size, const std::string& where)
{
    if (!node.is_array() || node.size() != size) {
        std::ostringstream os;
        os << "model file: " << where << " must be an array of length " << size;
        throw ValidationError(os.str());
    }
    return node;
}

double number_at(const nlohmann::json& node, const std::string& where)
{
    if (!node.is_number()) {
        throw ValidationError("model file: " + where + " is not a number");
    }
    return node.get<double>();
}

} // namespace

nlohmann::json model_to_json(const AmdpModel& model)
{
    const std::size_t S = model.n_states();
    const std::size_t A = model.n_actions();
    nlohmann::json transitions = nlohmann::json::array();
    for (StateId i = 0; i < S; ++i) {
        nlohmann::json per_action = nlohmann::json::array();
        for (ActionId a = 0; a < A; ++a) {
            const auto row = model.transition_row(i, a);
            per_action.push_back(std::vector<double>(row.begin(), row.end()));
        }
        transitions.push_back(std::move(per_action));
    }
    nlohmann::json rewards = nlohmann::json::array();
    for (AgentId m = 0; m < model.n_agents(); ++m) {
        nlohmann::json per_state = nlohmann::json::array();
        for (StateId i = 0; i < S; ++i) {
            nlohmann::json per_action = nlohmann::json::array();
            for (ActionId a = 0; a < A; ++a) {
                std::vector<double> row(S);
                for (StateId j = 0; j < S; ++j)
                    row[j] = model.r(m, i, a, j);
                per_action.push_back(std::move(row));
            }
            per_state.push_back(std::move(per_action));
        }
        rewards.push_back(std::move(per_state));
    }
    return {{"n_states", S},
            {"n_actions", A},
            {"n_agents", model.n_agents()},
            {"transitions", std::move(transitions)},
            {"rewards", std::move(rewards)}};
}

AmdpModel model_from_json(const nlohmann::json& doc)
{
    if (!doc.is_object())
        throw ValidationError("model file: top level must be an object");
    const std::size_t S = positive_count(doc, "n_states");
    const std::size_t A = positive_count(doc, "n_actions");
    const std::size_t M = positive_count(doc, "n_agents");
    if (!doc.contains("transitions") || !doc.contains("rewards"))
        throw ValidationError("model file: missing \"transitions\" or \"rewards\"");

    std::vector<double> transitions;
    transitions.reserve(S * A * S);
    const auto& tp = array_of(doc["transitions"], S, "transitions");
    for (StateId i = 0; i < S; ++i) {
        const auto& ti = array_of(tp[i], A, "transitions[" + std::to_string(i) + "]");
        for (ActionId a = 0; a < A; ++a) {
            const std::string where =
                "transitions[" + std::to_string(i) + "][" + std::to_string(a) + "]";
            const auto& row = array_of(ti[a], S, where);
            for (StateId j = 0; j < S; ++j)
                transitions.push_back(number_at(row[j], where));
        }
    }

    std::vector<double> rewards;
    rewards.reserve(M * S * A * S);
    const auto& rp = array_of(doc["rewards"], M, "rewards");
    for (AgentId m = 0; m < M; ++m) {
        const auto& rm = array_of(rp[m], S, "rewards[" + std::to_string(m) + "]");
        for (StateId i = 0; i < S; ++i) {
            const auto& ri = array_of(
                rm[i], A, "rewards[" + std::to_string(m) + "][" + std::to_string(i) + "]");
            for (ActionId a = 0; a < A; ++a) {
                const std::string where = "rewards[" + std::to_string(m) + "][" +
                                          std::to_string(i) + "][" + std::to_string(a) + "]";
                const auto& row = array_of(ri[a], S, where);
                for (StateId j = 0; j < S; ++j)
                    rewards.push_back(number_at(row[j], where));
            }
        }
    }
    return {S, A, M, std::move(transitions), std::move(rewards)};
}

nlohmann::json read_json_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ValidationError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void write_json_file(const nlohmann::json& doc, const std::filesystem::path& path)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw ValidationError("cannot write " + path.string());
    out << doc.dump(1) << '\n';
}

AmdpModel load_model(const std::filesystem::path& path)
{
    try {
        return model_from_json(read_json_file(path));
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void save_model(const AmdpModel& model, const std::filesystem::path& path)
{
    write_json_file(model_to_json(model), path);
}

nlohmann::json policy_to_json(const StochasticPolicy& pi)
{
    nlohmann::json rows = nlohmann::json::array();
    for (StateId i = 0; i < pi.n_states(); ++i) {
        std::vector<double> row(pi.n_actions());
        for (ActionId a = 0; a < pi.n_actions(); ++a)
            row[a] = pi(i, a);
        rows.push_back(std::move(row));
    }
    return rows;
}

StochasticPolicy policy_from_json(const nlohmann::json& doc)
{
    if (!doc.is_array() || doc.empty() || !doc[0].is_array())
        throw ValidationError("policy: expected a non-empty array of rows");
    const std::size_t S = doc.size();
    const std::size_t A = doc[0].size();
    std::vector<double> probs;
    probs.reserve(S * A);
    for (const auto& row : doc) {
        if (!row.is_array() || row.size() != A)
            throw ValidationError("policy: ragged rows");
        for (const auto& x : row)
            probs.push_back(number_at(x, "policy entry"));
    }
    return {S, A, std::move(probs)};
}

} // namespace votemarl
