#pragma once

// Parameter checkpoints as JSON:
//
//   {"header": {...},
//    "params": {"<name>": {"shape": [rows, cols], "data": [f64...]}, ...}}
//
// Parameter names are emitted in sorted order and doubles use shortest
// round-trip rendering, so save -> load -> save is byte-identical for finite
// values.

#include <map>
#include <string>

#include <json.hpp>

#include "percept/autodiff.hpp"
#include "percept/errors.hpp"

namespace percept::ad {

inline std::string save_checkpoint(const std::map<std::string, const Tensor*>& params,
                                   const nlohmann::ordered_json& header) {
    nlohmann::ordered_json root;
    root["header"] = header;
    nlohmann::ordered_json jp = nlohmann::ordered_json::object();
    for (const auto& [name, t] : params) {
        nlohmann::ordered_json entry;
        entry["shape"] = {t->rows, t->cols};
        entry["data"] = t->data;
        jp[name] = std::move(entry);
    }
    root["params"] = std::move(jp);
    return root.dump();
}

struct Checkpoint {
    nlohmann::json header;
    std::map<std::string, Tensor> params;
};

inline Checkpoint load_checkpoint(const std::string& text) {
    nlohmann::json root = nlohmann::json::parse(text, nullptr, false);
    if (root.is_discarded() || !root.is_object() || !root.contains("params"))
        throw DataError("malformed checkpoint: expected {\"header\":..., \"params\":...}");
    Checkpoint ck;
    ck.header = root.value("header", nlohmann::json::object());
    for (const auto& [name, entry] : root["params"].items()) {
        if (!entry.contains("shape") || !entry.contains("data") ||
            !entry["shape"].is_array() || entry["shape"].size() != 2)
            throw DataError("malformed checkpoint entry '" + name + "'");
        Tensor t(entry["shape"][0].get<std::size_t>(), entry["shape"][1].get<std::size_t>());
        auto data = entry["data"].get<std::vector<double>>();
        if (data.size() != t.size())
            throw DataError("checkpoint entry '" + name + "': data length does not match shape");
        t.data = std::move(data);
        ck.params[name] = std::move(t);
    }
    return ck;
}

// Copies a named parameter into `dst`, which fixes the expected shape.
inline void restore_param(const Checkpoint& ck, const std::string& name, Tensor& dst) {
    auto it = ck.params.find(name);
    if (it == ck.params.end()) throw DataError("checkpoint is missing parameter '" + name + "'");
    if (it->second.rows != dst.rows || it->second.cols != dst.cols)
        throw DataError("checkpoint parameter '" + name + "' has shape " +
                        it->second.shape_str() + ", expected " + dst.shape_str());
    dst.data = it->second.data;
}

}  // namespace percept::ad
