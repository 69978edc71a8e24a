// Copyright 2026 the migratekit Authors
// SPDX-License-Identifier: Apache-2.0

//! GUI test migration: abstract a general test logic from source test
//! cases, then concretize it into an executable test case for a target app.

pub mod abstractor;
pub mod concretizer;
pub mod device;
pub mod evaluator;
pub mod feedback;
pub mod ir;
pub mod llm;
pub mod pipeline;
pub mod sim;
