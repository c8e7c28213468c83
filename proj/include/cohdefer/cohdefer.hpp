#pragma once
// Umbrella header. File formats are in io.hpp (needs json.hpp), brute-force
// references in oracle.hpp.

#include "error.hpp"
#include "taxonomy.hpp"
#include "contract.hpp"
#include "coherence.hpp"
#include "tbp.hpp"
#include "tree_dp.hpp"
#include "decode.hpp"
#include "rpo_loss.hpp"
#include "eval.hpp"
#include "synth.hpp"
