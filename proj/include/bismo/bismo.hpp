#pragma once

#include "bismo/error.hpp"
#include "bismo/bitmatrix.hpp"
#include "bismo/refgemm.hpp"
#include "bismo/compressor.hpp"
#include "bismo/hw_config.hpp"
#include "bismo/isa.hpp"
#include "bismo/memory.hpp"
#include "bismo/simulator.hpp"
#include "bismo/scheduler.hpp"
#include "bismo/costmodel.hpp"
#include "bismo/matrix_io.hpp"
