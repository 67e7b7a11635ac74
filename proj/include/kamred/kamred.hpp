#pragma once

#include "kamred/error.hpp"
#include "kamred/linalg.hpp"
#include "kamred/freq_index.hpp"
#include "kamred/torus_map.hpp"
#include "kamred/sl2.hpp"
#include "kamred/approx_fn.hpp"
#include "kamred/arithmetics.hpp"
#include "kamred/kam_step.hpp"
#include "kamred/schedule.hpp"
#include "kamred/driver.hpp"
#include "kamred/rotation.hpp"
#include "kamred/io.hpp"
