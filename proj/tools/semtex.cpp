// Copyright 2026 The semtex Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end.
//
//   semtex synth-data  --out data
//   semtex train       --stage 1 --config desk.cfg --out run
//   semtex parametrize --mesh car.obj --out run
//   semtex generate    --conditional --mesh car.obj --style photo.png --out run
//   semtex evaluate    --unconditional --out run
//   semtex export      --mesh car.obj --textures run/samples/car --out run
//
// Exit status: 0 on success, 1 on usage errors, 2 on runtime failures.

#include "semtex/app.hpp"

int main(int argc, char** argv) { return semtex::run_cli(argc, argv); }
