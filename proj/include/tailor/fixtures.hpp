#pragma once

#include "tailor/graph.hpp"

#include <string>

namespace tailor::fixtures {

// TinyNet: stem conv + relu, three residual conv blocks, global pool, and a
// matmul/gelu/matmul classifier. 18 nodes, compiles to 2 stages.
ComputationGraph tinynet();

// TinyNet-1S: stem conv, one stage of three inverted-residual blocks, pool,
// classifier. 78 variants under its shipped config.
ComputationGraph tinynet1s();

// TinyNet-4S: four stages of inverted-residual blocks separated by stride-2
// downsampling convs. ~2.1e4 variants under its shipped config.
ComputationGraph tinynet4s();

// TinyFormer: one pre-norm attention block plus one residual FFN block over a
// [1, 16, 64] token tensor.
ComputationGraph tinyformer();

// TinyFFN: the classic biased FFN chain matmul-add-gelu-matmul-add.
ComputationGraph tinyffn();

std::string tinynet_example_config(); // resolution/depth/FFN expand example document
std::string tinynet_full_config();
std::string tinynet1s_config();
std::string tinynet4s_config();
std::string tinyformer_config();

} // namespace tailor::fixtures
