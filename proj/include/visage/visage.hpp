#pragma once

// Umbrella header for the visage library: data-driven frontal-face geometry
// enhancement (landmarks -> PCA distance codes -> adversarially trained
// mapping -> least-squares landmark recovery -> piecewise-affine warp) plus
// the appearance/consistency loss family and a KNN beautification baseline.

#include "visage/adam.hpp"
#include "visage/common.hpp"
#include "visage/delaunay.hpp"
#include "visage/extractor.hpp"
#include "visage/geogan.hpp"
#include "visage/geometry.hpp"
#include "visage/image.hpp"
#include "visage/knn.hpp"
#include "visage/layers.hpp"
#include "visage/lm.hpp"
#include "visage/losses.hpp"
#include "visage/network.hpp"
#include "visage/pca.hpp"
#include "visage/pipeline.hpp"
#include "visage/synth.hpp"
#include "visage/tensor.hpp"
#include "visage/warp.hpp"
