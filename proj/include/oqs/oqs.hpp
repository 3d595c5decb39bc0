#pragma once

#include "oqs/types.hpp"
#include "oqs/bath.hpp"
#include "oqs/noise.hpp"
#include "oqs/liouville.hpp"
#include "oqs/sln.hpp"
#include "oqs/hierarchy.hpp"
#include "oqs/reference.hpp"
