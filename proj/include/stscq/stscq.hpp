#pragma once

#include "stscq/bitstream.hpp"
#include "stscq/codebook.hpp"
#include "stscq/dataset.hpp"
#include "stscq/error.hpp"
#include "stscq/image.hpp"
#include "stscq/latent_transform.hpp"
#include "stscq/metrics.hpp"
#include "stscq/quantizer.hpp"
#include "stscq/router.hpp"
#include "stscq/synthetic.hpp"
#include "stscq/trainer.hpp"
