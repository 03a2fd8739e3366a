// Copyright 2026 The ATFuse Authors. All Rights Reserved.
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

// Writes a small registered corpus of synthetic infrared/visible pairs.
#include <CLI11.hpp>

#include <iostream>

#include "atfuse/error.hpp"
#include "atfuse/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"synthetic infrared/visible corpus", "atfuse_synth"};
  std::string out;
  std::size_t count = 4, height = 64, width = 64;
  std::uint64_t seed = 0;
  app.add_option("--out", out, "corpus directory")->required();
  app.add_option("--count", count);
  app.add_option("--height", height);
  app.add_option("--width", width);
  app.add_option("--seed", seed);
  CLI11_PARSE(app, argc, argv);
  try {
    atfuse::write_synthetic_corpus(out, count, height, width, seed);
  } catch (const atfuse::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  std::cout << "wrote " << count << " pairs to " << out << '\n';
  return 0;
}
