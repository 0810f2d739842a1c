#pragma once

#include "stprotein/attention.hpp"
#include "stprotein/autoencoder.hpp"
#include "stprotein/checkpoint.hpp"
#include "stprotein/cluster.hpp"
#include "stprotein/csv.hpp"
#include "stprotein/dataset.hpp"
#include "stprotein/errors.hpp"
#include "stprotein/graph.hpp"
#include "stprotein/manifest.hpp"
#include "stprotein/metrics.hpp"
#include "stprotein/optim.hpp"
#include "stprotein/preprocess.hpp"
#include "stprotein/svg.hpp"
#include "stprotein/synth.hpp"
#include "stprotein/types.hpp"
#include "stprotein/version.hpp"
