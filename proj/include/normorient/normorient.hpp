#pragma once

#include "normorient/evaluation.hpp"
#include "normorient/geometry.hpp"
#include "normorient/knn.hpp"
#include "normorient/normal_estimation.hpp"
#include "normorient/orientation.hpp"
#include "normorient/parallel.hpp"
#include "normorient/patch_model.hpp"
#include "normorient/plane_detection.hpp"
#include "normorient/pointcloud_io.hpp"
#include "normorient/random.hpp"
#include "normorient/ray_engine.hpp"
#include "normorient/synthetic_scenes.hpp"
