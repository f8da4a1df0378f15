#ifndef MAPGAN_MAPGAN_HPP_
#define MAPGAN_MAPGAN_HPP_

#include "mapgan/data.hpp"
#include "mapgan/gan.hpp"
#include "mapgan/gradcheck.hpp"
#include "mapgan/image.hpp"
#include "mapgan/nn.hpp"
#include "mapgan/ops.hpp"
#include "mapgan/rng.hpp"
#include "mapgan/tensor.hpp"
#include "mapgan/train.hpp"

#endif  // MAPGAN_MAPGAN_HPP_
