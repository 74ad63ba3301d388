#ifndef POINTNORM_HPP
#define POINTNORM_HPP

#include "pointnorm/backbones.hpp"
#include "pointnorm/commands.hpp"
#include "pointnorm/config.hpp"
#include "pointnorm/dataset.hpp"
#include "pointnorm/engine.hpp"
#include "pointnorm/error.hpp"
#include "pointnorm/eval.hpp"
#include "pointnorm/matrix.hpp"
#include "pointnorm/normalizers.hpp"
#include "pointnorm/params.hpp"
#include "pointnorm/synthgen.hpp"

#endif  // POINTNORM_HPP
