#include "tailor/modspace.hpp"
#include "tailor/errors.hpp"
#include "tailor/templates.hpp"
#include "tailor/toml_lite.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

namespace tailor::space {

using ir::ModuleKind;
using ir::ModulePtr;
using ir::TailorModule;

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace {

std::vector<AttrValue> to_candidates(const toml::Value& v, const std::string& key, int line) {
    std::vector<AttrValue> out;
    if (auto* ints = std::get_if<std::vector<std::int64_t>>(&v.data)) {
        for (auto i : *ints) out.emplace_back(i);
    } else if (auto* floats = std::get_if<std::vector<double>>(&v.data)) {
        for (auto f : *floats) out.emplace_back(f);
    } else if (auto* i = std::get_if<std::int64_t>(&v.data)) {
        out.emplace_back(*i);
    } else if (auto* f = std::get_if<double>(&v.data)) {
        out.emplace_back(*f);
    } else {
        throw ParseError("config line " + std::to_string(line) + ": '" + key +
                         "' must be a number list");
    }
    if (out.empty())
        throw ValidationError("config: '" + key + "' declares an empty candidate list");
    return out;
}

} // namespace

SpaceConfig parse_config(const std::string& text) {
    SpaceConfig cfg;
    for (const auto& entry : toml::parse(text)) {
        if (entry.section.empty()) {
            if (entry.key == "title") {
                if (auto* s = std::get_if<std::string>(&entry.value.data)) cfg.title = *s;
            }
            continue;
        }
        if (entry.section == "arch") {
            if (entry.key != "blocks")
                throw ParseError("config line " + std::to_string(entry.line) +
                                 ": unknown [arch] key '" + entry.key + "'");
            if (auto* lst = std::get_if<std::vector<std::string>>(&entry.value.data)) {
                cfg.block_templates = *lst;
            } else if (auto* one = std::get_if<std::string>(&entry.value.data)) {
                cfg.block_templates = {*one};
            } else {
                throw ParseError("config line " + std::to_string(entry.line) +
                                 ": 'blocks' must be a string list");
            }
            continue;
        }
        if (entry.section == "var.global_vars") {
            cfg.global_vars.emplace_back(entry.key, to_candidates(entry.value, entry.key, entry.line));
            continue;
        }
        if (entry.section == "var.stage_vars") {
            auto cands = to_candidates(entry.value, entry.key, entry.line);
            if (entry.key == "reduce_depth")
                for (const auto& c : cands)
                    if (auto* i = std::get_if<std::int64_t>(&c); !i || *i > 0)
                        throw ValidationError("config: reduce_depth candidates must be integers <= 0");
            cfg.stage_vars.emplace_back(entry.key, cands);
            continue;
        }
        if (entry.section == "var.block_vars") {
            auto dot = entry.key.find('.');
            if (dot == std::string::npos || dot == 0 || dot + 1 >= entry.key.size())
                throw ParseError("config line " + std::to_string(entry.line) +
                                 ": block var keys use Template.attr dotted names");
            SpaceConfig::BlockVar bv;
            bv.template_name = entry.key.substr(0, dot);
            bv.attr = entry.key.substr(dot + 1);
            bv.candidates = to_candidates(entry.value, entry.key, entry.line);
            cfg.block_vars.push_back(std::move(bv));
            continue;
        }
        throw ParseError("config line " + std::to_string(entry.line) + ": unknown section [" +
                         entry.section + "]");
    }
    return cfg;
}

SpaceConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// Values & spec strings
// ---------------------------------------------------------------------------

std::string value_to_string(const AttrValue& v) {
    if (auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
    if (auto* d = std::get_if<double>(&v)) {
        char buf[64];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), *d);
        (void)ec;
        return std::string(buf, ptr);
    }
    return attr_value_to_string(v);
}

const Dimension* ModificationSpace::find(const std::string& dim_id) const {
    for (const auto& d : dims)
        if (d.dim_id == dim_id) return &d;
    return nullptr;
}

// ---------------------------------------------------------------------------
// Binding
// ---------------------------------------------------------------------------

namespace {

double as_double(const AttrValue& v) {
    if (auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
    if (auto* d = std::get_if<double>(&v)) return *d;
    throw ValidationError("candidate values must be numeric");
}

void check_no_duplicates(const std::vector<AttrValue>& cands, const std::string& what) {
    std::set<std::string> seen;
    for (const auto& c : cands)
        if (!seen.insert(value_to_string(c)).second)
            throw ValidationError(what + ": duplicate candidate " + value_to_string(c));
}

void collect_stages(const TailorModule& m, std::vector<const TailorModule*>& out) {
    if (m.kind == ModuleKind::Stage) out.push_back(&m);
    for (const auto& c : m.children) collect_stages(*c, out);
}

void collect_blocks(const TailorModule& m, std::vector<const TailorModule*>& out) {
    if (m.kind == ModuleKind::Block) out.push_back(&m);
    for (const auto& c : m.children) collect_blocks(*c, out);
}

} // namespace

ModificationSpace bind_space(const ModulePtr& model, const SpaceConfig& cfg) {
    ModificationSpace sp;
    std::set<std::string> dim_ids;
    auto add_dim = [&](Dimension d) {
        if (!dim_ids.insert(d.dim_id).second)
            throw ValidationError("dimension '" + d.dim_id + "' declared twice");
        sp.dims.push_back(std::move(d));
    };

    for (const auto& [name, cands] : cfg.global_vars) {
        if (name != "resolution")
            throw ValidationError("unsupported global dimension '" + name +
                                  "' (supported: resolution)");
        auto it = model->feature.attrs.find("resolution");
        if (it == model->feature.attrs.end())
            throw ValidationError("config declares resolution but the model input is not a square "
                                  "spatial tensor");
        std::int64_t meta = std::get<std::int64_t>(it->second.meta);
        check_no_duplicates(cands, "resolution");
        bool has_meta = false;
        for (const auto& c : cands) {
            auto* i = std::get_if<std::int64_t>(&c);
            if (!i) throw ValidationError("resolution candidates must be integers");
            if (*i < 1 || *i > meta)
                throw ValidationError("resolution candidate " + std::to_string(*i) +
                                      " outside (0, " + std::to_string(meta) + "]");
            if (*i == meta) has_meta = true;
        }
        if (!has_meta)
            throw ValidationError("resolution candidates must include the model resolution " +
                                  std::to_string(meta) + " (the default)");
        add_dim({"global/resolution", Scope::Global, cands, AttrValue(meta), "", "resolution"});
    }

    std::vector<const TailorModule*> stages;
    collect_stages(*model, stages);

    for (const auto& [name, cands] : cfg.stage_vars) {
        if (name != "reduce_depth")
            throw ValidationError("unsupported stage dimension '" + name +
                                  "' (supported: reduce_depth)");
        check_no_duplicates(cands, "reduce_depth");
        bool any = false;
        for (const auto* stage : stages) {
            auto d = stage->feature.attrs.find("depth");
            if (d == stage->feature.attrs.end()) continue; // no depth hook
            std::int64_t depth = std::get<std::int64_t>(d->second.meta);
            std::vector<AttrValue> legal;
            bool has_default = false;
            for (const auto& c : cands) {
                std::int64_t r = std::get<std::int64_t>(c);
                if (depth + r >= 1) legal.push_back(c);
                if (r == 0) has_default = true;
            }
            if (!has_default)
                throw ValidationError("reduce_depth candidates must include 0 (the default)");
            any = true;
            add_dim({stage->path + "/reduce_depth", Scope::Stage, legal, AttrValue(std::int64_t(0)),
                     stage->path, "reduce_depth"});
        }
        if (!any)
            throw ValidationError("config declares reduce_depth but the model has no stages with "
                                  "depth hooks");
    }

    std::vector<const TailorModule*> blocks;
    collect_blocks(*model, blocks);

    for (const auto& bv : cfg.block_vars) {
        const compiler::BlockTemplate* tmpl = compiler::find_template(bv.template_name);
        if (!tmpl)
            throw ValidationError("unknown block template '" + bv.template_name + "' in block vars");
        bool hook_exists = false;
        for (const auto& h : tmpl->hooks)
            if (h.name == bv.attr) hook_exists = true;
        if (!hook_exists)
            throw ValidationError("template '" + bv.template_name + "' exposes no dimension '" +
                                  bv.attr + "'");
        std::vector<AttrValue> cands;
        for (const auto& c : bv.candidates) cands.emplace_back(as_double(c));
        check_no_duplicates(cands, bv.template_name + "." + bv.attr);

        bool any = false;
        for (const auto* block : blocks) {
            if (block->template_name != bv.template_name) continue;
            const ir::HookBinding* hb = nullptr;
            for (const auto& h : block->hooks)
                if (h.hook == bv.attr) hb = &h;
            if (!hb) continue; // matched variant does not expose this hook
            double meta = as_double(block->feature.attrs.at(bv.attr).meta);
            bool has_meta = false;
            for (const auto& c : cands) {
                double v = std::get<double>(c);
                if (v <= 0 || v > meta + 1e-9)
                    throw ValidationError(bv.template_name + "." + bv.attr + " candidate " +
                                          value_to_string(c) + " exceeds meta " +
                                          std::to_string(meta) + " on '" + block->path + "'");
                double raw = v * hb->base;
                if (std::abs(raw - std::llround(raw)) > 1e-6)
                    throw ValidationError(bv.template_name + "." + bv.attr + " candidate " +
                                          value_to_string(c) + " yields a non-integral attribute on '" +
                                          block->path + "'");
                if (std::abs(v - meta) < 1e-12) has_meta = true;
            }
            if (!has_meta)
                throw ValidationError(bv.template_name + "." + bv.attr +
                                      " candidates must include the meta value " +
                                      value_to_string(AttrValue(meta)) + " of '" + block->path + "'");
            any = true;
            add_dim({block->path + "/" + bv.attr, Scope::Block, cands, AttrValue(meta), block->path,
                     bv.attr});
        }
        if (!any)
            throw ValidationError(bv.template_name + "." + bv.attr +
                                  " matches no block in the compiled model");
    }

    // Canonical order: global, then stage dims, then block dims, each by path.
    std::stable_sort(sp.dims.begin(), sp.dims.end(), [](const Dimension& a, const Dimension& b) {
        if (a.scope != b.scope) return static_cast<int>(a.scope) < static_cast<int>(b.scope);
        return a.dim_id < b.dim_id;
    });
    return sp;
}

// ---------------------------------------------------------------------------
// Counting
// ---------------------------------------------------------------------------

BigUint count_variants(const ModificationSpace& sp, const ModulePtr& model) {
    BigUint total(1);
    for (const auto& d : sp.dims)
        if (d.scope == Scope::Global) total *= BigUint(d.candidates.size());

    std::vector<const TailorModule*> stages;
    collect_stages(*model, stages);
    for (const auto* stage : stages) {
        std::vector<BigUint> block_factor;
        for (const auto& block : stage->children) {
            BigUint f(1);
            for (const auto& d : sp.dims)
                if (d.scope == Scope::Block && d.target_path == block->path)
                    f *= BigUint(d.candidates.size());
            block_factor.push_back(f);
        }
        const Dimension* depth_dim = nullptr;
        for (const auto& d : sp.dims)
            if (d.scope == Scope::Stage && d.target_path == stage->path) depth_dim = &d;

        BigUint stage_count(0);
        if (depth_dim) {
            std::int64_t meta_depth = std::get<std::int64_t>(stage->feature.attrs.at("depth").meta);
            for (const auto& c : depth_dim->candidates) {
                std::int64_t depth = meta_depth + std::get<std::int64_t>(c);
                BigUint combo(1);
                for (std::int64_t j = 0; j < depth; ++j) combo *= block_factor[static_cast<std::size_t>(j)];
                stage_count += combo;
            }
        } else {
            stage_count = BigUint(1);
            for (const auto& f : block_factor) stage_count *= f;
        }
        total *= stage_count;
    }
    return total;
}

// ---------------------------------------------------------------------------
// Sampling / normalization / application
// ---------------------------------------------------------------------------

SubNetSpec sample_subnet_rng(const ModificationSpace& sp, const ModulePtr& model,
                             std::mt19937_64& rng) {
    SubNetSpec spec;
    for (const auto& d : sp.dims) {
        std::size_t idx = static_cast<std::size_t>(rng() % d.candidates.size());
        spec.assignment[d.dim_id] = d.candidates[idx];
    }
    return normalize_spec(spec, sp, model);
}

SubNetSpec sample_subnet(const ModificationSpace& sp, const ModulePtr& model, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sample_subnet_rng(sp, model, rng);
}

namespace {

// stage path -> active depth under the spec (meta depth when unassigned).
std::map<std::string, std::int64_t> active_depths(const SubNetSpec& spec,
                                                  const ModificationSpace& sp,
                                                  const ModulePtr& model) {
    std::map<std::string, std::int64_t> out;
    std::vector<const TailorModule*> stages;
    collect_stages(*model, stages);
    for (const auto* stage : stages) {
        std::int64_t depth = std::get<std::int64_t>(stage->feature.attrs.count("depth")
                                                        ? stage->feature.attrs.at("depth").meta
                                                        : AttrValue(std::int64_t(stage->children.size())));
        for (const auto& d : sp.dims) {
            if (d.scope != Scope::Stage || d.target_path != stage->path) continue;
            auto it = spec.assignment.find(d.dim_id);
            if (it != spec.assignment.end()) depth += std::get<std::int64_t>(it->second);
        }
        out[stage->path] = depth;
    }
    return out;
}

std::optional<std::pair<std::string, std::int64_t>> block_parent_and_index(const std::string& path) {
    // "stage[i]/block[j]" -> ("stage[i]", j)
    auto slash = path.rfind('/');
    if (slash == std::string::npos) return std::nullopt;
    std::string comp = path.substr(slash + 1);
    if (comp.rfind("block[", 0) != 0) return std::nullopt;
    std::int64_t idx = std::strtoll(comp.c_str() + 6, nullptr, 10);
    return std::make_pair(path.substr(0, slash), idx);
}

bool values_equal(const AttrValue& a, const AttrValue& b) {
    return value_to_string(a) == value_to_string(b);
}

} // namespace

SubNetSpec normalize_spec(const SubNetSpec& spec, const ModificationSpace& sp,
                          const ModulePtr& model) {
    auto depths = active_depths(spec, sp, model);
    SubNetSpec out;
    for (const auto& [dim_id, value] : spec.assignment) {
        const Dimension* d = sp.find(dim_id);
        if (!d) throw ValidationError("unknown dimension '" + dim_id + "' in spec");
        if (values_equal(value, d->default_value)) continue;
        if (d->scope == Scope::Block) {
            auto parent = block_parent_and_index(d->target_path);
            if (parent) {
                auto it = depths.find(parent->first);
                if (it != depths.end() && parent->second >= it->second) continue; // block dropped
            }
        }
        out.assignment[dim_id] = value;
    }
    return out;
}

void validate_spec(const SubNetSpec& spec, const ModificationSpace& sp) {
    for (const auto& [dim_id, value] : spec.assignment) {
        const Dimension* d = sp.find(dim_id);
        if (!d) throw ValidationError("unknown dimension '" + dim_id + "' in spec");
        bool found = false;
        for (const auto& c : d->candidates)
            if (values_equal(c, value)) found = true;
        if (!found)
            throw ValidationError("value " + value_to_string(value) + " not a candidate of '" +
                                  dim_id + "'");
    }
}

ModulePtr apply_spec(const ModulePtr& model, const SubNetSpec& spec, const ModificationSpace& sp) {
    validate_spec(spec, sp);
    ModulePtr tree = model;
    for (const auto& d : sp.dims) {
        auto it = spec.assignment.find(d.dim_id);
        if (it == spec.assignment.end()) continue;
        if (values_equal(it->second, d.default_value)) continue;
        tree = ir::transform(tree, {d.target_path, d.attr, it->second});
    }
    return ir::update(tree);
}

ComputationGraph apply_subnet(const ModulePtr& model, const SubNetSpec& spec,
                              const ModificationSpace& sp) {
    return ir::build(apply_spec(model, spec, sp));
}

std::string spec_to_string(const SubNetSpec& spec, const ModificationSpace& sp,
                           const ModulePtr& model) {
    auto normalized = normalize_spec(spec, sp, model);
    if (normalized.assignment.empty()) return "default";
    std::string out;
    for (const auto& [dim_id, value] : normalized.assignment) {
        if (!out.empty()) out += ';';
        out += dim_id + "=" + value_to_string(value);
    }
    return out;
}

SubNetSpec spec_from_string(const std::string& text, const ModificationSpace& sp) {
    SubNetSpec spec;
    if (text.empty() || text == "default") return spec;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t semi = text.find(';', start);
        std::string part = text.substr(start, semi == std::string::npos ? std::string::npos
                                                                        : semi - start);
        start = semi == std::string::npos ? text.size() : semi + 1;
        if (part.empty()) continue;
        auto eq = part.find('=');
        if (eq == std::string::npos)
            throw ParseError("malformed spec entry '" + part + "' (expected dim=value)");
        std::string dim_id = part.substr(0, eq);
        std::string value = part.substr(eq + 1);
        const Dimension* d = sp.find(dim_id);
        if (!d) throw ValidationError("unknown dimension '" + dim_id + "' in spec string");
        bool found = false;
        for (const auto& c : d->candidates) {
            if (value_to_string(c) == value) {
                spec.assignment[dim_id] = c;
                found = true;
                break;
            }
        }
        if (!found)
            throw ValidationError("value '" + value + "' not a candidate of '" + dim_id + "'");
    }
    return spec;
}

std::vector<SubNetSpec> enumerate_all_specs(const ModificationSpace& sp, const ModulePtr& model) {
    std::vector<SubNetSpec> out;
    std::set<std::string> seen;
    std::vector<std::size_t> idx(sp.dims.size(), 0);
    while (true) {
        SubNetSpec spec;
        for (std::size_t i = 0; i < sp.dims.size(); ++i)
            spec.assignment[sp.dims[i].dim_id] = sp.dims[i].candidates[idx[i]];
        auto normalized = normalize_spec(spec, sp, model);
        auto key = spec_to_string(normalized, sp, model);
        if (seen.insert(key).second) out.push_back(std::move(normalized));

        std::size_t d = sp.dims.size();
        while (d > 0) {
            --d;
            if (++idx[d] < sp.dims[d].candidates.size()) break;
            idx[d] = 0;
            if (d == 0) return out;
        }
        if (sp.dims.empty()) return out;
    }
}

// ---------------------------------------------------------------------------
// Space JSON
// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

json value_json(const AttrValue& v) {
    if (auto* i = std::get_if<std::int64_t>(&v)) return *i;
    return std::get<double>(v);
}

AttrValue value_from_json(const json& j) {
    if (j.is_number_integer()) return j.get<std::int64_t>();
    return j.get<double>();
}

const char* scope_name(Scope s) {
    switch (s) {
        case Scope::Global: return "global";
        case Scope::Stage: return "stage";
        case Scope::Block: return "block";
    }
    return "?";
}

Scope scope_from_name(const std::string& s) {
    if (s == "global") return Scope::Global;
    if (s == "stage") return Scope::Stage;
    if (s == "block") return Scope::Block;
    throw ParseError("unknown scope '" + s + "'");
}

} // namespace

std::string space_to_json(const ModificationSpace& sp) {
    json doc;
    doc["format"] = "tailor-space/1";
    json dims = json::array();
    for (const auto& d : sp.dims) {
        json jd;
        jd["dim_id"] = d.dim_id;
        jd["scope"] = scope_name(d.scope);
        json cands = json::array();
        for (const auto& c : d.candidates) cands.push_back(value_json(c));
        jd["candidates"] = cands;
        jd["default"] = value_json(d.default_value);
        jd["target_path"] = d.target_path;
        jd["attr"] = d.attr;
        dims.push_back(jd);
    }
    doc["dims"] = dims;
    return doc.dump(1) + "\n";
}

ModificationSpace space_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed space document: ") + e.what());
    }
    if (doc.value("format", "") != "tailor-space/1")
        throw ValidationError("space document has unsupported format version");
    ModificationSpace sp;
    for (const auto& jd : doc.value("dims", json::array())) {
        Dimension d;
        d.dim_id = jd.at("dim_id").get<std::string>();
        d.scope = scope_from_name(jd.at("scope").get<std::string>());
        for (const auto& c : jd.at("candidates")) d.candidates.push_back(value_from_json(c));
        d.default_value = value_from_json(jd.at("default"));
        d.target_path = jd.at("target_path").get<std::string>();
        d.attr = jd.at("attr").get<std::string>();
        sp.dims.push_back(std::move(d));
    }
    return sp;
}

} // namespace tailor::space
