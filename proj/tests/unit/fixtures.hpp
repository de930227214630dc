#pragma once

#include "selfcollapse/trajectory.hpp"

namespace fixtures {

/// Coarse, short version of the standard scenario for fast tests.
inline selfcollapse::RunConfig small_config()
{
    selfcollapse::RunConfig c;
    c.x_min = -30.0;
    c.x_max = 30.0;
    c.n_points = 1201;
    c.packet = {-12.0, 1.5, 3.0};
    c.t_max = 8.0;
    c.tau = 0.2;
    c.n_trajectories = 200;
    c.threads = 2;
    return c;
}

}  // namespace fixtures
