// Copyright 2026 The HoloProxy Authors
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

#include "holoproxy/error.hpp"
#include "holoproxy/model.hpp"
#include "holoproxy/interaction.hpp"
#include "holoproxy/anchor.hpp"
#include "holoproxy/wire.hpp"
#include "holoproxy/reducer.hpp"
#include "holoproxy/session.hpp"
#include "holoproxy/oracles.hpp"
#include "holoproxy/sim.hpp"
