/* Copyright 2026 The fbi Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/


#pragma once

#include "fbi/channel.hpp"
#include "fbi/config.hpp"
#include "fbi/corpus.hpp"
#include "fbi/distance.hpp"
#include "fbi/errors.hpp"
#include "fbi/family_sim.hpp"
#include "fbi/manifest.hpp"
#include "fbi/open_world.hpp"
#include "fbi/parallel.hpp"
#include "fbi/protocol.hpp"
#include "fbi/random.hpp"
#include "fbi/walled_garden.hpp"
