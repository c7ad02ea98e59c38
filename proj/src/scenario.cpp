#include "gridveil/scenario.hpp"

#include <set>

#include <json.hpp>

#include "gridveil/hash.hpp"

namespace gridveil::netsim {

using ordered_json = nlohmann::ordered_json;
using plain_json = nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

void reject_unknown(const ordered_json& obj, const std::set<std::string>& known,
                    const std::string& where, std::vector<std::string>& errors) {
    for (const auto& [key, value] : obj.items())
        if (!known.count(key))
            errors.push_back(where + ": unknown key '" + key + "'");
}

}  // namespace

Outcome<Scenario, NetsimError> scenario_from_json_text(const std::string& text) {
    using R = Outcome<Scenario, NetsimError>;
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        return R::failure(NetsimError::invalid_scenario, std::string("ParseError: ") + e.what());
    }

    std::vector<std::string> errors;
    Scenario s;
    try {
        if (!j.is_object()) {
            return R::failure(NetsimError::invalid_scenario, "ParseError: document is not an object");
        }
        reject_unknown(j,
                       {"schema", "version", "name", "seed", "slot_count", "slot_ms",
                        "price_policy_rate", "prosumers", "extra_routers", "link", "demand",
                        "cover_rate_per_slot", "min_ring_size", "ring_size",
                        "zero_mixin_fraction", "adversary_output_fraction", "hop_count",
                        "batching_delay_ms", "pad_cells", "clearing_deadline_slots", "group",
                        "genesis_token_pool", "adversary_vantage"},
                       "scenario", errors);
        if (j.value("schema", "gridveil.scenario") != "gridveil.scenario")
            errors.push_back("schema: expected 'gridveil.scenario'");
        if (j.value("version", kSchemaVersion) != kSchemaVersion)
            errors.push_back("version: unsupported");

        s.name = j.value("name", s.name);
        s.seed = j.value("seed", s.seed);
        s.slot_count = j.value("slot_count", s.slot_count);
        s.slot_ms = j.value("slot_ms", s.slot_ms);
        s.price_policy_rate = j.value("price_policy_rate", s.price_policy_rate);
        s.extra_routers = j.value("extra_routers", s.extra_routers);
        s.cover_rate_per_slot = j.value("cover_rate_per_slot", s.cover_rate_per_slot);
        s.min_ring_size = j.value("min_ring_size", s.min_ring_size);
        s.ring_size = j.value("ring_size", s.ring_size);
        s.zero_mixin_fraction = j.value("zero_mixin_fraction", s.zero_mixin_fraction);
        s.adversary_output_fraction =
            j.value("adversary_output_fraction", s.adversary_output_fraction);
        s.hop_count = j.value("hop_count", s.hop_count);
        s.batching_delay_ms = j.value("batching_delay_ms", s.batching_delay_ms);
        s.pad_cells = j.value("pad_cells", s.pad_cells);
        s.clearing_deadline_slots = j.value("clearing_deadline_slots", s.clearing_deadline_slots);
        s.group = j.value("group", s.group);
        s.genesis_token_pool = j.value("genesis_token_pool", s.genesis_token_pool);

        if (j.contains("link")) {
            const auto& l = j.at("link");
            reject_unknown(l, {"base_ms", "jitter_ms", "drop_prob"}, "link", errors);
            s.link.base_ms = l.value("base_ms", s.link.base_ms);
            s.link.jitter_ms = l.value("jitter_ms", s.link.jitter_ms);
            s.link.drop_prob = l.value("drop_prob", s.link.drop_prob);
        }
        if (j.contains("adversary_vantage")) {
            s.adversary_vantage.clear();
            if (j.at("adversary_vantage").is_string())
                s.adversary_vantage.push_back(j.at("adversary_vantage").get<std::string>());
            else
                for (const auto& v : j.at("adversary_vantage"))
                    s.adversary_vantage.push_back(v.get<std::string>());
        }
        if (j.contains("prosumers")) {
            s.prosumers.clear();
            for (std::size_t i = 0; i < j.at("prosumers").size(); ++i) {
                const auto& p = j.at("prosumers")[i];
                reject_unknown(
                    p, {"name", "max_generation_w", "max_consumption_w", "initial_fiat_cents"},
                    "prosumers[" + std::to_string(i) + "]", errors);
                ProsumerSpec spec;
                spec.name = p.value("name", std::string{});
                spec.max_generation_w = p.value("max_generation_w", spec.max_generation_w);
                spec.max_consumption_w = p.value("max_consumption_w", spec.max_consumption_w);
                spec.initial_fiat_cents = p.value("initial_fiat_cents", spec.initial_fiat_cents);
                s.prosumers.push_back(spec);
            }
        }
        if (j.contains("demand")) {
            s.demand.clear();
            for (std::size_t i = 0; i < j.at("demand").size(); ++i) {
                const auto& d = j.at("demand")[i];
                reject_unknown(d,
                               {"seller", "buyer", "power_w", "interval", "unit_price_cents",
                                "post_slot", "accept_delay_slots", "delivery_ppm"},
                               "demand[" + std::to_string(i) + "]", errors);
                DemandItem item;
                item.seller = d.value("seller", std::string{});
                item.buyer = d.value("buyer", std::string{});
                item.power_w = d.value("power_w", item.power_w);
                if (d.contains("interval")) {
                    const auto& iv = d.at("interval");
                    reject_unknown(iv, {"start", "end"},
                                   "demand[" + std::to_string(i) + "].interval", errors);
                    item.interval.start = iv.value("start", 0u);
                    item.interval.end = iv.value("end", 0u);
                }
                item.unit_price_cents = d.value("unit_price_cents", item.unit_price_cents);
                item.post_slot = d.value("post_slot", item.post_slot);
                item.accept_delay_slots = d.value("accept_delay_slots", item.accept_delay_slots);
                item.delivery_ppm = d.value("delivery_ppm", item.delivery_ppm);
                s.demand.push_back(item);
            }
        }
    } catch (const std::exception& e) {
        return R::failure(NetsimError::invalid_scenario, std::string("ParseError: ") + e.what());
    }

    auto semantic = validate_scenario(s);
    errors.insert(errors.end(), semantic.begin(), semantic.end());
    if (!errors.empty()) {
        std::string joined;
        for (std::size_t i = 0; i < errors.size(); ++i)
            joined += (i ? "\n" : "") + errors[i];
        return R::failure(NetsimError::invalid_scenario, joined);
    }
    return R::success(std::move(s));
}

std::string scenario_to_json_text(const Scenario& s) {
    ordered_json j;
    j["schema"] = "gridveil.scenario";
    j["version"] = kSchemaVersion;
    j["name"] = s.name;
    j["seed"] = s.seed;
    j["slot_count"] = s.slot_count;
    j["slot_ms"] = s.slot_ms;
    j["price_policy_rate"] = s.price_policy_rate;
    j["prosumers"] = ordered_json::array();
    for (const auto& p : s.prosumers)
        j["prosumers"].push_back(ordered_json{{"name", p.name},
                                              {"max_generation_w", p.max_generation_w},
                                              {"max_consumption_w", p.max_consumption_w},
                                              {"initial_fiat_cents", p.initial_fiat_cents}});
    j["extra_routers"] = s.extra_routers;
    j["link"] = ordered_json{{"base_ms", s.link.base_ms},
                             {"jitter_ms", s.link.jitter_ms},
                             {"drop_prob", s.link.drop_prob}};
    j["demand"] = ordered_json::array();
    for (const auto& d : s.demand)
        j["demand"].push_back(ordered_json{
            {"seller", d.seller},
            {"buyer", d.buyer},
            {"power_w", d.power_w},
            {"interval", ordered_json{{"start", d.interval.start}, {"end", d.interval.end}}},
            {"unit_price_cents", d.unit_price_cents},
            {"post_slot", d.post_slot},
            {"accept_delay_slots", d.accept_delay_slots},
            {"delivery_ppm", d.delivery_ppm}});
    j["cover_rate_per_slot"] = s.cover_rate_per_slot;
    j["min_ring_size"] = s.min_ring_size;
    j["ring_size"] = s.ring_size;
    j["zero_mixin_fraction"] = s.zero_mixin_fraction;
    j["adversary_output_fraction"] = s.adversary_output_fraction;
    j["hop_count"] = s.hop_count;
    j["batching_delay_ms"] = s.batching_delay_ms;
    j["pad_cells"] = s.pad_cells;
    j["clearing_deadline_slots"] = s.clearing_deadline_slots;
    j["group"] = s.group;
    j["genesis_token_pool"] = s.genesis_token_pool;
    j["adversary_vantage"] = s.adversary_vantage;
    return j.dump(2) + "\n";
}

Outcome<std::string, NetsimError> apply_overrides(const std::string& json_text,
                                                  const std::vector<std::string>& overrides) {
    using R = Outcome<std::string, NetsimError>;
    ordered_json j;
    try {
        j = ordered_json::parse(json_text);
    } catch (const std::exception& e) {
        return R::failure(NetsimError::invalid_scenario, std::string("ParseError: ") + e.what());
    }
    for (const auto& kv : overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            return R::failure(NetsimError::invalid_scenario,
                              "override '" + kv + "' is not key=value");
        std::string path = kv.substr(0, eq);
        std::string value = kv.substr(eq + 1);

        ordered_json* cursor = &j;
        std::size_t pos = 0;
        while (true) {
            auto dot = path.find('.', pos);
            std::string key = path.substr(pos, dot == std::string::npos ? dot : dot - pos);
            if (dot == std::string::npos) {
                ordered_json parsed;
                try {
                    parsed = ordered_json::parse(value);
                } catch (...) {
                    parsed = value;  // plain string
                }
                (*cursor)[key] = parsed;
                break;
            }
            if (!cursor->contains(key) || !(*cursor)[key].is_object())
                (*cursor)[key] = ordered_json::object();
            cursor = &(*cursor)[key];
            pos = dot + 1;
        }
    }
    return R::success(j.dump(2));
}

std::string scenario_config_hash(const Scenario& s) {
    // key-sorted canonical form
    plain_json sorted = plain_json::parse(scenario_to_json_text(s));
    std::string canonical = sorted.dump();
    auto digest = sha256(Bytes(canonical.begin(), canonical.end()));
    return to_hex(digest.data(), digest.size());
}

}  // namespace gridveil::netsim
