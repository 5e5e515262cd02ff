#pragma once

#include "amkalign/amk_mmd.hpp"
#include "amkalign/checkpoint.hpp"
#include "amkalign/config.hpp"
#include "amkalign/encoder.hpp"
#include "amkalign/error.hpp"
#include "amkalign/eval.hpp"
#include "amkalign/feature_batch.hpp"
#include "amkalign/fft.hpp"
#include "amkalign/harness.hpp"
#include "amkalign/iffs.hpp"
#include "amkalign/image.hpp"
#include "amkalign/io.hpp"
#include "amkalign/losses.hpp"
#include "amkalign/matrix.hpp"
#include "amkalign/pesam.hpp"
#include "amkalign/rng.hpp"
#include "amkalign/synthetic.hpp"
