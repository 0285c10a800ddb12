// Copyright 2026 The llmsched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <vector>

#include "llmsched/csv.hpp"
#include "llmsched/engine.hpp"
#include "llmsched/workload.hpp"

namespace llmsched {

inline void write_batch_log(std::ostream& os, const SimResult& r) {
  os << "node,batch_seq,start_s,end_s,tau,n_prefill_items,n_decode_items,flags\n";
  for (const auto& b : r.batches) {
    os << b.node << ',' << b.seq << ',' << csv::format_time(b.start) << ','
       << csv::format_time(b.end) << ',' << b.tau << ',' << b.n_prefill << ',' << b.n_decode
       << ',' << batch_flags::to_string(b.flags) << '\n';
  }
}

inline void write_requests(std::ostream& os, const SimResult& r,
                           const std::vector<SloClass>& classes) {
  os << "id,class,arrival_s,first_token_s,completion_s,prompt_len,output_len\n";
  for (const auto& q : r.requests) {
    os << q.id << ',' << classes.at(std::size_t(q.class_id)).name << ','
       << csv::format_time(q.arrival) << ','
       << (q.first_token ? csv::format_time(*q.first_token) : "") << ','
       << (q.completion ? csv::format_time(*q.completion) : "") << ',' << q.prompt_len << ','
       << q.output_len << '\n';
  }
}

inline void write_token_emits(std::ostream& os, const SimResult& r) {
  os << "id,token_index,emit_s\n";
  for (const auto& q : r.requests) {
    for (std::size_t k = 0; k < q.emits.size(); ++k) {
      os << q.id << ',' << (k + 1) << ',' << csv::format_time(q.emits[k]) << '\n';
    }
  }
}

}  // namespace llmsched
