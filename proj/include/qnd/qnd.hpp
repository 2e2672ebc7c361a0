// qnd.hpp — Umbrella header

#pragma once

#include "qnd/core.hpp"
#include "qnd/linalg.hpp"
#include "qnd/pauli.hpp"
#include "qnd/quadrature.hpp"
#include "qnd/oscillator_propagator.hpp"
#include "qnd/spin_propagator.hpp"
#include "qnd/oracle.hpp"
#include "qnd/canonical_structure.hpp"
