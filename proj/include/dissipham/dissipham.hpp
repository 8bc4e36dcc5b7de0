#pragma once

#include "dissipham/config.hpp"
#include "dissipham/ensemble.hpp"
#include "dissipham/integrate.hpp"
#include "dissipham/io.hpp"
#include "dissipham/model.hpp"
#include "dissipham/substitute.hpp"
#include "dissipham/trajectory.hpp"
#include "dissipham/verify.hpp"
