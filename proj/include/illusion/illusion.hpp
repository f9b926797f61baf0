#pragma once

#include "illusion/conductivity.hpp"
#include "illusion/config.hpp"
#include "illusion/diffeo.hpp"
#include "illusion/dtn.hpp"
#include "illusion/experiments.hpp"
#include "illusion/fem.hpp"
#include "illusion/mesh.hpp"
#include "illusion/svg.hpp"
#include "illusion/types.hpp"
