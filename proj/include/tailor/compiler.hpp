#pragma once

#include "tailor/graph.hpp"
#include "tailor/ir.hpp"
#include "tailor/modspace.hpp"
#include "tailor/templates.hpp"

#include <string>
#include <vector>

namespace tailor::compiler {

struct CompileResult {
    ir::ModulePtr model;
    space::ModificationSpace space;
    std::string report;
};

// Step 1: map every node to an operator or static-bypass module; trace
// multi-consumer fan-outs until they converge and group them into DefaultBlocks.
std::vector<ir::ModulePtr> parse_operators(const ComputationGraph& g);

// Step 2: replace maximal non-overlapping template matches. Earlier topological
// position wins, then the longer pattern; equal-length matches of different
// templates at one anchor are an error.
std::vector<ir::ModulePtr> match_blocks(const std::vector<ir::ModulePtr>& mods,
                                        const ComputationGraph& g,
                                        const std::vector<const BlockTemplate*>& templates);

// Step 3: group consecutive blocks with identical output resolution and width
// into stages, assign paths, and return the updated model root.
ir::ModulePtr divide_stages(const std::vector<ir::ModulePtr>& mods, const ComputationGraph& g);

CompileResult compile(const ComputationGraph& g, const space::SpaceConfig& cfg);

// Compiled-artifact directory: model.json (graph + config, reproduced by the
// deterministic compile), space.json, report.txt.
void save_compiled(const ComputationGraph& g, const space::SpaceConfig& cfg,
                   const CompileResult& result, const std::string& dir);
CompileResult load_compiled(const std::string& dir);

bool is_dynamic_op(const std::string& op_type);

} // namespace tailor::compiler
