#pragma once

#include "nomt/alfd.hpp"
#include "nomt/appearance.hpp"
#include "nomt/assignment.hpp"
#include "nomt/core.hpp"
#include "nomt/hypo.hpp"
#include "nomt/infer.hpp"
#include "nomt/io.hpp"
#include "nomt/ipt.hpp"
#include "nomt/metrics.hpp"
#include "nomt/parallel.hpp"
#include "nomt/potentials.hpp"
#include "nomt/synth.hpp"
#include "nomt/tracker.hpp"
