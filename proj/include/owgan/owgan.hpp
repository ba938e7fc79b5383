#pragma once

#include "owgan/linalg.hpp"
#include "owgan/rng.hpp"
#include "owgan/autodiff.hpp"
#include "owgan/ortho.hpp"
#include "owgan/data.hpp"
#include "owgan/wgan.hpp"
#include "owgan/eval.hpp"
#include "owgan/io.hpp"
#include "owgan/cli.hpp"
