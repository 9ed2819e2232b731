#pragma once

// Umbrella header for the fundus library.

#include "fundus/analysis/latent.hpp"
#include "fundus/analysis/silhouette.hpp"
#include "fundus/analysis/umap.hpp"
#include "fundus/classify/metrics.hpp"
#include "fundus/classify/probe.hpp"
#include "fundus/classify/svm.hpp"
#include "fundus/core/image.hpp"
#include "fundus/core/rng.hpp"
#include "fundus/core/ssim.hpp"
#include "fundus/core/tensor.hpp"
#include "fundus/data/dataset.hpp"
#include "fundus/data/synthetic.hpp"
#include "fundus/io/csv.hpp"
#include "fundus/io/png_io.hpp"
#include "fundus/io/safetensors.hpp"
#include "fundus/nn/adam.hpp"
#include "fundus/nn/layers.hpp"
#include "fundus/pipeline/config.hpp"
#include "fundus/pipeline/pipeline.hpp"
#include "fundus/plot/plot.hpp"
#include "fundus/train/checkpoint.hpp"
#include "fundus/train/harness.hpp"
#include "fundus/vae/extractor.hpp"
#include "fundus/vae/loss.hpp"
#include "fundus/vae/model.hpp"
