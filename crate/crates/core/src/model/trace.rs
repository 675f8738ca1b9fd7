use alloc::vec::Vec;

use crate::tensor::Matrix;

/// Which attention a matrix came from. Rows are queries, columns are keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Knowledge rows attend over question rows.
    KnowledgeToQuestion,
    /// Question rows attend over knowledge rows.
    QuestionToKnowledge,
    KnowledgeSelf,
    QuestionSelf,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::KnowledgeToQuestion,
        Direction::QuestionToKnowledge,
        Direction::KnowledgeSelf,
        Direction::QuestionSelf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::KnowledgeToQuestion => "knowledge_to_question",
            Direction::QuestionToKnowledge => "question_to_knowledge",
            Direction::KnowledgeSelf => "knowledge_self",
            Direction::QuestionSelf => "question_self",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub direction: Direction,
    pub block: usize,
    pub head: usize,
    /// Attention probabilities before dropout.
    pub matrix: Matrix,
    /// Key (column) mask used by the softmax.
    pub key_mask: Vec<bool>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttentionTrace {
    pub entries: Vec<TraceEntry>,
}

impl AttentionTrace {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Mean over heads and blocks of every matrix recorded for `direction`.
    pub fn export(&self, direction: Direction) -> Option<Matrix> {
        let mut it = self.entries.iter().filter(|e| e.direction == direction);
        let first = it.next()?;
        let mut acc = first.matrix.clone();
        let mut n = 1.0;
        for e in it {
            acc.add_assign(&e.matrix);
            n += 1.0;
        }
        acc.scale_in_place(1.0 / n);
        Some(acc)
    }

    /// Attention mass received by each key (column sums of the export).
    pub fn column_mass(&self, direction: Direction) -> Option<Vec<f64>> {
        let m = self.export(direction)?;
        Some((0..m.cols()).map(|j| (0..m.rows()).map(|i| m.get(i, j)).sum()).collect())
    }

    /// Column mask of the matrices exported for `direction`.
    pub fn key_mask(&self, direction: Direction) -> Option<&[bool]> {
        self.entries.iter().find(|e| e.direction == direction).map(|e| e.key_mask.as_slice())
    }
}
