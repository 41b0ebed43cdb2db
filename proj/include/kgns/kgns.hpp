#pragma once

#include "kgns/common.hpp"
#include "kgns/kg_store.hpp"
#include "kgns/ingestion.hpp"
#include "kgns/embeddings.hpp"
#include "kgns/grounding.hpp"
#include "kgns/nn.hpp"
#include "kgns/isr.hpp"
#include "kgns/sfr.hpp"
#include "kgns/pipeline.hpp"
