use std::collections::HashMap;
use std::sync::{Condvar, Mutex};

use super::{StoreError, TableId};

/// Identifies whoever holds a table lock (a refresh job or transaction).
pub type LockOwner = u64;

/// Per-table exclusive locks. One refresh at a time per dynamic table.
#[derive(Debug, Default)]
pub struct LockTable {
    held: Mutex<HashMap<TableId, LockOwner>>,
    released: Condvar,
}

impl LockTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Acquires the lock, blocking while another owner holds it.
    pub fn lock(&self, table: TableId, owner: LockOwner) {
        let mut held = self.held.lock().unwrap();
        while held.contains_key(&table) {
            held = self.released.wait(held).unwrap();
        }
        held.insert(table, owner);
    }

    pub fn try_lock(&self, table: TableId, owner: LockOwner) -> Result<(), StoreError> {
        let mut held = self.held.lock().unwrap();
        match held.get(&table) {
            Some(&holder) => Err(StoreError::WouldBlock { table, holder }),
            None => {
                held.insert(table, owner);
                Ok(())
            }
        }
    }

    pub fn unlock(&self, table: TableId, owner: LockOwner) -> Result<(), StoreError> {
        let mut held = self.held.lock().unwrap();
        match held.get(&table) {
            Some(&holder) if holder == owner => {
                held.remove(&table);
                self.released.notify_all();
                Ok(())
            }
            holder => Err(StoreError::LockProtocolViolation { table, owner, holder: holder.copied() }),
        }
    }

    pub fn holder(&self, table: TableId) -> Option<LockOwner> {
        self.held.lock().unwrap().get(&table).copied()
    }
}
