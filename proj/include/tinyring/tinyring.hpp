#pragma once

#include "tinyring/agent.hpp"
#include "tinyring/bench.hpp"
#include "tinyring/descriptor.hpp"
#include "tinyring/error.hpp"
#include "tinyring/mem_env.hpp"
#include "tinyring/netfuncs.hpp"
#include "tinyring/nic_model.hpp"
#include "tinyring/pcap.hpp"
#include "tinyring/reference_model.hpp"
