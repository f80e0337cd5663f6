// Copyright 2026 The eqm Authors
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

#ifndef EQM_ERRORS_HPP_
#define EQM_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace eqm {

// Non-finite values or failed numeric contracts at runtime.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Iterates left the representable range during an equilibrium solve.
class SolverDivergence : public NumericError {
 public:
  SolverDivergence(const std::string& what, int iteration)
      : NumericError(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}

  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

}  // namespace eqm

#endif  // EQM_ERRORS_HPP_
