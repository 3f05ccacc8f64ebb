#pragma once

#include <stdexcept>
#include <string>

namespace mergelab {

// Base class for all data/validation errors raised by this library.
// CLI maps these to exit code 2; usage problems are handled by the
// argument parser and exit 1.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define MERGELAB_DEFINE_ERROR(NAME)                  \
    struct NAME : Error {                            \
        using Error::Error;                          \
    }

// tensor_store
MERGELAB_DEFINE_ERROR(MalformedHeader);
MERGELAB_DEFINE_ERROR(OffsetOverlap);
MERGELAB_DEFINE_ERROR(TruncatedData);
MERGELAB_DEFINE_ERROR(UnsupportedDType);
MERGELAB_DEFINE_ERROR(IoFailure);
MERGELAB_DEFINE_ERROR(NonFiniteValue);

// merge
MERGELAB_DEFINE_ERROR(IncompatibleInputs);
MERGELAB_DEFINE_ERROR(InvalidWeights);
MERGELAB_DEFINE_ERROR(AntipodalTensors);
MERGELAB_DEFINE_ERROR(LengthMismatch);

// sweep
MERGELAB_DEFINE_ERROR(KTooLarge);
MERGELAB_DEFINE_ERROR(EvaluatorFailure);
MERGELAB_DEFINE_ERROR(EmptyGrid);
MERGELAB_DEFINE_ERROR(Timeout);
MERGELAB_DEFINE_ERROR(BadPredictionsFormat);

// clf_metrics
MERGELAB_DEFINE_ERROR(MissingLogprob);
MERGELAB_DEFINE_ERROR(DegenerateLabels);

// dlt
MERGELAB_DEFINE_ERROR(EmptySplit);
MERGELAB_DEFINE_ERROR(NonPositivePerplexity);

// toy_lm / ehr_text
MERGELAB_DEFINE_ERROR(EmptyCorpus);
MERGELAB_DEFINE_ERROR(UnknownSymbol);
MERGELAB_DEFINE_ERROR(SchemaViolation);
MERGELAB_DEFINE_ERROR(DuplicatePatientId);
MERGELAB_DEFINE_ERROR(UnknownTemplate);

// retrieval
MERGELAB_DEFINE_ERROR(DuplicateDocId);
MERGELAB_DEFINE_ERROR(MixedQueryIds);
MERGELAB_DEFINE_ERROR(NoJudgments);

#undef MERGELAB_DEFINE_ERROR

} // namespace mergelab
