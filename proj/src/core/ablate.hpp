// Copyright 2026 the pssdet authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>
#include <vector>

#include "core/run_config.hpp"

namespace pssdet {

// Names accepted by workflow_ablate.
const std::vector<std::string>& ablation_sweeps();

// One trained variant of the base config.
struct AblationCell {
  std::string label;
  RunConfig cfg;
};

// The cell list a sweep would train, without running anything. Throws
// invalid_argument for unknown sweep names.
std::vector<AblationCell> ablation_cells(const RunConfig& base, const std::string& sweep);

// Trains every cell of the named sweep under out_dir/<label> and returns a
// comparison table: one row per variant, columns for AP at IoU 0.5 and mean
// AP through both decode paths plus the duplicate rate without suppression.
// Two-step cells whose first phase would be identical share one phase-1
// checkpoint; the table footer records which. max_parallel > 1 trains that
// many cells concurrently, each cell single-threaded. The table is also
// written to out_dir/ablation_<sweep>.txt with per-cell reports in
// out_dir/ablation_<sweep>.json.
std::string workflow_ablate(const RunConfig& base, const std::string& sweep, const std::string& out_dir,
                            int max_parallel = 1);

}  // namespace pssdet
