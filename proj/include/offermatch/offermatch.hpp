#pragma once

#include "offermatch/baseline.hpp"
#include "offermatch/common.hpp"
#include "offermatch/digest.hpp"
#include "offermatch/grid.hpp"
#include "offermatch/html.hpp"
#include "offermatch/identity.hpp"
#include "offermatch/ingest.hpp"
#include "offermatch/metrics.hpp"
#include "offermatch/offer.hpp"
#include "offermatch/pairs.hpp"
#include "offermatch/parallel.hpp"
#include "offermatch/pipeline.hpp"
#include "offermatch/random.hpp"
#include "offermatch/text.hpp"
#include "offermatch/union_find.hpp"
