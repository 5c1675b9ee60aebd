#pragma once

#include "stagger/designs.hpp"
#include "stagger/error.hpp"
#include "stagger/graph.hpp"
#include "stagger/inference.hpp"
#include "stagger/panel.hpp"
#include "stagger/random.hpp"
#include "stagger/regress.hpp"
#include "stagger/robust.hpp"
#include "stagger/series.hpp"
#include "stagger/simgen.hpp"
#include "stagger/stats.hpp"
#include "stagger/text.hpp"
#include "stagger/twfe.hpp"
